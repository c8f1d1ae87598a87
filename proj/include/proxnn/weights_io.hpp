#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "proxnn/pnn.hpp"

namespace proxnn {

/// Container layout: the magic line "PNNW1", a single-line JSON manifest, a newline,
/// then the concatenated little-endian float32 payload. The manifest's "tensors"
/// entry lists name, shape, byte offset and byte length of each blob in order.
inline constexpr const char* kWeightsMagic = "PNNW1";

struct TensorBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;  // stored as float32
};

struct Container {
    nlohmann::json header;  // manifest without the tensor directory
    std::vector<TensorBlob> tensors;
};

std::string encode_container(const nlohmann::json& header, const std::vector<TensorBlob>& tensors);
/// Throws FormatError on a bad magic, malformed manifest, overlapping or
/// non-contiguous directory, or a payload that does not cover a tensor.
Container decode_container(const std::string& bytes);

std::string serialize_weights(const PnnModel& model);
/// Rebuilds the model and refreshes LNO norms from the seeded start.
PnnModel deserialize_weights(const std::string& bytes);

void write_weights(const std::string& path, const PnnModel& model);
PnnModel read_weights(const std::string& path);

}  // namespace proxnn
