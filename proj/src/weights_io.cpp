#include "proxnn/weights_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "proxnn/csv.hpp"

namespace proxnn {

namespace {

void put_f32(std::string& out, double v)
{
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double get_f32(const std::string& in, std::size_t pos)
{
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
    return static_cast<double>(std::bit_cast<float>(bits));
}

nlohmann::json real_to_json(double v)
{
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double real_from_json(const nlohmann::json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw FormatError("unexpected real literal '" + s + "'");
    }
    return j.get<double>();
}

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string encode_container(const nlohmann::json& header, const std::vector<TensorBlob>& tensors)
{
    nlohmann::json manifest = header;
    nlohmann::json dir = nlohmann::json::array();
    std::string payload;
    for (const auto& t : tensors) {
        std::size_t count = 1;
        for (int d : t.shape) count *= static_cast<std::size_t>(d);
        if (count != t.values.size()) throw ShapeError("tensor '" + t.name + "' shape does not match its values");
        const std::size_t offset = payload.size();
        for (double v : t.values) put_f32(payload, v);
        dir.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"length", payload.size() - offset}});
    }
    manifest["tensors"] = dir;
    manifest["payload_bytes"] = payload.size();
    return std::string(kWeightsMagic) + "\n" + manifest.dump() + "\n" + payload;
}

Container decode_container(const std::string& bytes)
{
    const std::string magic_line = std::string(kWeightsMagic) + "\n";
    if (bytes.compare(0, magic_line.size(), magic_line) != 0) throw FormatError("bad magic: not a PNNW1 container");
    const std::size_t eol = bytes.find('\n', magic_line.size());
    if (eol == std::string::npos) throw FormatError("container manifest is not newline-terminated");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(magic_line.size(), eol - magic_line.size()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw FormatError("container manifest lacks a tensor directory");
    const std::size_t payload_start = eol + 1;
    const std::size_t payload_size = bytes.size() - payload_start;

    Container c;
    std::size_t expected_offset = 0;
    for (const auto& entry : manifest["tensors"]) {
        TensorBlob t;
        try {
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<int>>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto length = entry.at("length").get<std::size_t>();
            std::size_t count = 1;
            for (int d : t.shape) {
                if (d < 0) throw FormatError("tensor '" + t.name + "' has a negative dimension");
                count *= static_cast<std::size_t>(d);
            }
            if (offset != expected_offset)
                throw FormatError("tensor '" + t.name + "' offset " + std::to_string(offset) + " breaks contiguity (expected " +
                                  std::to_string(expected_offset) + ")");
            if (length != 4 * count)
                throw FormatError("tensor '" + t.name + "' length " + std::to_string(length) + " does not match its shape");
            if (offset + length > payload_size)
                throw FormatError("tensor '" + t.name + "' is truncated: needs bytes [" + std::to_string(offset) + ", " +
                                  std::to_string(offset + length) + ") but payload has " + std::to_string(payload_size));
            t.values.resize(count);
            for (std::size_t i = 0; i < count; ++i) t.values[i] = get_f32(bytes, payload_start + offset + 4 * i);
            expected_offset = offset + length;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("malformed tensor directory entry: ") + e.what());
        }
        c.tensors.push_back(std::move(t));
    }
    if (expected_offset != payload_size)
        throw FormatError("payload has " + std::to_string(payload_size) + " bytes, directory accounts for " +
                          std::to_string(expected_offset));
    manifest.erase("tensors");
    manifest.erase("payload_bytes");
    c.header = std::move(manifest);
    return c;
}

std::string serialize_weights(const PnnModel& model)
{
    model.validate();
    nlohmann::json h;
    h["kind"] = "pnn-weights";
    h["arch"] = to_string(model.arch);
    h["variant"] = to_string(model.variant);
    h["K"] = model.K;
    h["J"] = model.J;
    h["C"] = model.C;
    h["box"] = {real_to_json(model.box.lo), real_to_json(model.box.hi)};
    h["inertia_a"] = model.inertia_a;
    h["norm"] = {{"height", model.norm_settings.height},
                 {"width", model.norm_settings.width},
                 {"tol", model.norm_settings.tol},
                 {"max_iter", model.norm_settings.max_iter},
                 {"seed", model.norm_settings.seed}};
    // Informational copy of the positive step scalars, derived from the stored float32 values.
    nlohmann::json mu = nlohmann::json::array();
    for (double v : model.log_mu) mu.push_back(std::exp(as_f32(v)));
    h["scalars"] = {{"mu", mu}};

    std::vector<TensorBlob> tensors;
    const auto layout = param_layout(model);
    const auto flat = flatten_params(model);
    for (const auto& seg : layout)
        tensors.push_back(TensorBlob{seg.name, seg.shape,
                                     std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                                                         flat.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.length))});
    return encode_container(h, tensors);
}

PnnModel deserialize_weights(const std::string& bytes)
{
    Container c = decode_container(bytes);
    const auto& h = c.header;
    PnnModel m;
    try {
        if (h.value("kind", "") != "pnn-weights") throw FormatError("container does not hold network weights");
        const std::string arch = h.at("arch").get<std::string>();
        const std::string variant = h.at("variant").get<std::string>();
        try {
            m.arch = parse_arch(arch);
            m.variant = parse_variant(variant);
        } catch (const ParameterError& e) {
            throw FormatError(e.what());
        }
        m.K = h.at("K").get<int>();
        m.J = h.at("J").get<int>();
        m.C = h.at("C").get<int>();
        m.box = BoxConstraint{real_from_json(h.at("box").at(0)), real_from_json(h.at("box").at(1))};
        m.inertia_a = h.at("inertia_a").get<double>();
        const auto& n = h.at("norm");
        m.norm_settings = NormSettings{n.at("height").get<int>(), n.at("width").get<int>(), n.at("tol").get<double>(),
                                       n.at("max_iter").get<int>(), n.at("seed").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("weights manifest: ") + e.what());
    }
    if (m.K <= 0 || m.J <= 0 || m.C <= 0) throw FormatError("weights manifest: K, J and C must be positive");

    m.layers.resize(m.K);
    for (auto& l : m.layers) {
        l.forward = ConvStack(m.J, m.C);
        if (m.variant == VariantKind::LFO) l.adjoint = AdjointPolicy::with_untied(ConvStack(m.C, m.J));
    }
    m.log_mu.assign(scalar_count(m.arch, m.variant, m.K), 0.0);

    const auto layout = param_layout(m);
    if (layout.size() != c.tensors.size()) {
        throw FormatError("weights: manifest declares K=" + std::to_string(m.K) + " (" + std::to_string(layout.size()) +
                          " tensors expected) but the container holds " + std::to_string(c.tensors.size()) + " tensors");
    }
    std::vector<double> flat;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& t = c.tensors[i];
        if (t.name != layout[i].name || t.shape != layout[i].shape)
            throw FormatError("weights: tensor " + std::to_string(i) + " is '" + t.name + "', expected '" +
                              layout[i].name + "' with the declared shape");
        flat.insert(flat.end(), t.values.begin(), t.values.end());
    }
    std::size_t pos = 0;
    for (auto& l : m.layers) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.forward.size(), l.forward.values().begin());
        pos += l.forward.size();
        if (l.adjoint.untied) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.adjoint.untied->size(),
                        l.adjoint.untied->values().begin());
            pos += l.adjoint.untied->size();
        }
    }
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.end(), m.log_mu.begin());
    m.validate();
    m.refresh_norms_cold();
    return m;
}

void write_weights(const std::string& path, const PnnModel& model) { write_file_atomic(path, serialize_weights(model)); }

PnnModel read_weights(const std::string& path) { return deserialize_weights(read_file(path)); }

}  // namespace proxnn
