#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proxnn/adam.hpp"
#include "proxnn/csv.hpp"
#include "proxnn/dataset.hpp"

namespace proxnn {

enum class NoiseSetting { Fixed, Variable };

struct TrainConfig {
    NoiseSetting setting = NoiseSetting::Fixed;
    double sigma = 0.08;                 // fixed setting
    double sigma_lo = 0.0, sigma_hi = 0.1;  // variable setting
    int epochs = 50;
    int batch = 8;
    int patch = 32;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    /// Draw fresh noise for every batch. When false the dataset's noisy images are
    /// used as stored (fixed setting only).
    bool resample_noise = true;
    /// Residual tolerance of the LNO norm refreshes between updates. The trained model
    /// gets a cold refresh at its own tolerance at the end.
    double norm_tol = 1e-6;
    /// Where the divergence guard writes the offending weights (empty: no dump).
    std::string dump_path;

    void validate() const;
};

struct TrainResult {
    PnnModel model;
    AdamState adam;
    CsvTable trace{{"epoch", "batch", "loss", "psnr"}};
    std::vector<double> losses;  // one per batch
};

/// Adam on the batch-mean loss. Clean images larger than the patch size are cropped
/// at a seeded offset each time they are drawn. A non-finite loss aborts with
/// TrainingError after dumping the current weights to config.dump_path.
TrainResult train(PnnModel model, const TrainConfig& config, const Dataset& data);

/// Writes the weights to `path` and the optimizer state to `path + ".adam"`.
void save_checkpoint(const std::string& path, const PnnModel& model, const AdamState& adam);

}  // namespace proxnn
