#include "proxnn/train.hpp"

#include <cmath>
#include <numeric>

#include "proxnn/errors.hpp"
#include "proxnn/image.hpp"
#include "proxnn/noise.hpp"
#include "proxnn/rng.hpp"
#include "proxnn/weights_io.hpp"

namespace proxnn {

void TrainConfig::validate() const
{
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (batch <= 0) throw ParameterError("batch size must be > 0");
    if (patch <= 0) throw ParameterError("patch size must be > 0");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be finite and >= 0");
    if (!(norm_tol > 0.0)) throw ParameterError("norm tolerance must be > 0");
    if (setting == NoiseSetting::Fixed && !(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
    if (setting == NoiseSetting::Variable && !(sigma_lo >= 0.0 && sigma_lo < sigma_hi))
        throw ParameterError("variable setting needs 0 <= sigma_lo < sigma_hi");
    if (setting == NoiseSetting::Variable && !resample_noise)
        throw ParameterError("variable setting always redraws the noise");
}

namespace {

Image crop(const Image& img, int size, Rng& rng)
{
    if (img.height() <= size && img.width() <= size) return img;
    const int h = std::min(size, img.height());
    const int w = std::min(size, img.width());
    const auto y0 = static_cast<int>(rng.uniform_int(0, img.height() - h));
    const auto x0 = static_cast<int>(rng.uniform_int(0, img.width() - w));
    Image out(img.channels(), h, w);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

}  // namespace

TrainResult train(PnnModel model, const TrainConfig& cfg, const Dataset& data)
{
    cfg.validate();
    if (data.samples.empty()) throw ParameterError("train: dataset is empty");
    model.validate();

    TrainResult res{std::move(model), AdamState{}, CsvTable({"epoch", "batch", "loss", "psnr"}), {}};
    res.adam.lr = cfg.lr;
    PnnModel& m = res.model;
    const double final_tol = m.norm_settings.tol;
    m.norm_settings.tol = std::max(cfg.norm_tol, final_tol);
    const auto layout = param_layout(m);
    std::vector<double> params = flatten_params(m);

    const std::size_t n = data.samples.size();
    std::vector<std::size_t> order(n);
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

        int batch_index = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch), ++batch_index, ++step) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
            Rng draw(Rng::derive_seed(cfg.seed ^ 0x7261696eULL, step));
            std::vector<Sample> batch;
            for (std::size_t j = start; j < stop; ++j) {
                const Sample& src = data.samples[order[j]];
                Sample s;
                if (cfg.resample_noise) {
                    s.clean = crop(src.clean, cfg.patch, draw);
                    s.sigma = cfg.setting == NoiseSetting::Fixed ? cfg.sigma : draw.uniform(cfg.sigma_lo, cfg.sigma_hi);
                    NoiseSpec spec;
                    spec.sigma = s.sigma;
                    spec.seed = draw.next_u64();
                    s.noisy = add_noise(s.clean, spec);
                } else {
                    s = src;
                }
                batch.push_back(std::move(s));
            }
            // Batches must share a shape; patches smaller than the requested size only
            // occur when every clean image is that small.
            LossResult lr = loss_and_grad(m, batch);
            if (!std::isfinite(lr.loss)) {
                if (!cfg.dump_path.empty()) write_weights(cfg.dump_path, m);
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index) +
                                    (cfg.dump_path.empty() ? std::string{} : "; state dumped to " + cfg.dump_path));
            }
            res.trace.add_row({static_cast<double>(epoch), static_cast<double>(batch_index), lr.loss, lr.mean_psnr});
            res.losses.push_back(lr.loss);
            if (cfg.lr == 0.0) continue;
            adam_step(res.adam, lr.grads, params, layout);
            assign_params(m, params);
        }
    }
    m.norm_settings.tol = final_tol;
    m.refresh_norms_cold();
    return res;
}

void save_checkpoint(const std::string& path, const PnnModel& model, const AdamState& adam)
{
    write_weights(path, model);
    write_file_atomic(path + ".adam", serialize_adam(adam));
}

}  // namespace proxnn
