// proxnn: command-line driver for MAP denoising, PNN training, Lipschitz
// certification and PnP deblurring. Every command writes a run manifest before
// computing; `proxnn rerun <manifest>` replays it.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "proxnn/csv.hpp"
#include "proxnn/dataset.hpp"
#include "proxnn/errors.hpp"
#include "proxnn/image.hpp"
#include "proxnn/image_io.hpp"
#include "proxnn/pnp.hpp"
#include "proxnn/rng.hpp"
#include "proxnn/robustness.hpp"
#include "proxnn/solvers.hpp"
#include "proxnn/train.hpp"
#include "proxnn/weights_io.hpp"

namespace fs = std::filesystem;
using namespace proxnn;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kOk = 0;
constexpr int kNumerical = 1;
constexpr int kUsage = 2;

struct UsageError : Error {
    using Error::Error;
};

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Sibling of `out` with the extension replaced by `suffix` ("x.png" -> "x_trace.csv").
std::string sibling(const std::string& out, const std::string& suffix)
{
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::vector<double> parse_list(const std::string& s, const char* what)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(what) + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw UsageError(std::string(what) + ": empty list");
    return out;
}

BoxConstraint parse_box(const std::string& s)
{
    const auto v = parse_list(s, "--box");
    if (v.size() != 2) throw UsageError("--box expects lo,hi");
    BoxConstraint b{v[0], v[1]};
    b.validate();
    return b;
}

/// Run manifest: command, raw arguments, every resolved option, seeds, input hashes.
class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> args) : command_(std::move(command)), args_(std::move(args)) {}

    void resolve(const CLI::App& app)
    {
        for (const CLI::Option* opt : app.get_options()) {
            const std::string name = opt->get_name();
            if (name == "--help" || name.empty()) continue;
            const auto& r = opt->results();
            if (!r.empty())
                flags_[name] = r.size() == 1 ? r.front() : CLI::detail::join(r, ",");
            else
                flags_[name] = opt->get_default_str();
        }
    }
    void seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }
    void input(const std::string& path)
    {
        if (path.rfind("stub:", 0) == 0 || path.rfind("synth:", 0) == 0) return;
        if (fs::is_directory(path)) {
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(path))
                if (e.is_regular_file()) files.push_back(e.path().string());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) inputs_[f] = hex64(fnv1a(read_file(f)));
        } else if (fs::is_regular_file(path)) {
            inputs_[path] = hex64(fnv1a(read_file(path)));
        }
    }
    void write(const std::string& path) const
    {
        json j;
        j["tool"] = "proxnn";
        j["version"] = kVersion;
        j["command"] = command_;
        j["args"] = args_;
        j["flags"] = flags_;
        j["seeds"] = seeds_;
        j["inputs"] = inputs_;
        write_file_atomic(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::map<std::string, std::string> flags_;
    std::map<std::string, std::uint64_t> seeds_;
    std::map<std::string, std::string> inputs_;
};

// ---------------------------------------------------------------------------
// denoise-map

struct DenoiseMapArgs {
    std::string in, out, solver = "dfb", filters = "grad", box = "0,1";
    double nu = 0.05, mu = 1.0, tol = 1e-10;
    int iters = 1000;
    int layer = 1;
};

int run_denoise_map(const DenoiseMapArgs& a, Manifest& man)
{
    const std::string manifest_path = sibling(a.out, "_manifest.json");
    man.input(a.in);
    if (a.filters != "grad") man.input(a.filters);
    man.write(manifest_path);

    const Image z = read_image(a.in);
    const BoxConstraint box = parse_box(a.box);
    ConvStack D;
    if (a.filters == "grad") {
        D = gradient_stack(z.channels());
    } else {
        const PnnModel m = read_weights(a.filters);
        if (a.layer < 1 || a.layer > m.K) throw UsageError("--layer must lie in 1.." + std::to_string(m.K));
        D = m.layers[a.layer - 1].forward;
        if (D.inputs() != z.channels()) throw UsageError("filters expect " + std::to_string(D.inputs()) + " channels");
    }
    if (!(a.nu >= 0.0)) throw UsageError("--nu must be >= 0");
    if (a.iters <= 0) throw UsageError("--iters must be > 0");

    SpectralNormOptions so;
    so.tol = 1e-10;
    so.max_iter = 5000;
    const double normD =
        leading_singular_triple(make_conv_operator(D, AdjointPolicy::tied(), z.height(), z.width()), so).norm;
    SolveOptions opts;
    opts.tol = a.tol;
    SolverResult r;
    if (normD == 0.0) {
        r.x = project_box(z, box);
    } else if (a.solver == "dfb" || a.solver == "difb") {
        r = difb_solve(z, D, AdjointPolicy::tied(), a.nu, box, difb_schedule(3.0, normD, a.solver == "difb", a.iters),
                       a.iters, opts);
    } else if (a.solver == "cp" || a.solver == "sccp") {
        r = sccp_solve(z, D, AdjointPolicy::tied(), a.nu, box, sccp_schedule(a.mu, normD, a.solver == "sccp", a.iters),
                       a.iters, opts);
    } else {
        throw UsageError("--solver must be one of dfb, difb, cp, sccp");
    }
    if (!all_finite(r.x)) throw DomainError("solver produced non-finite values");
    write_image(a.out, r.x, 16);
    write_file_atomic(sibling(a.out, "_trace.csv"), r.trace.csv());
    std::cout << "iterations " << r.iterations << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string arch = "ddfb", variant = "lno", data = "synth:200", setting = "fixed:0.08", out;
    int K = 5, J = 8, epochs = 50, batch = 8, size = 32, heldout = 50;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

struct NoiseSettingArg {
    NoiseSetting setting;
    double sigma, lo, hi;
};

NoiseSettingArg parse_setting(const std::string& s)
{
    if (s.rfind("fixed:", 0) == 0) {
        const auto v = parse_list(s.substr(6), "--setting");
        if (v.size() != 1 || !(v[0] >= 0.0)) throw UsageError("--setting fixed:<sigma> needs sigma >= 0");
        return {NoiseSetting::Fixed, v[0], 0.0, 0.0};
    }
    if (s.rfind("uniform:", 0) == 0) {
        const auto v = parse_list(s.substr(8), "--setting");
        if (v.size() != 2 || !(v[0] >= 0.0 && v[0] < v[1])) throw UsageError("--setting uniform:lo,hi needs 0 <= lo < hi");
        return {NoiseSetting::Variable, 0.0, v[0], v[1]};
    }
    throw UsageError("--setting must be fixed:<sigma> or uniform:<lo>,<hi>");
}

/// Clean images from "synth:N" (N cartoons of size x size) or a directory.
std::vector<Image> load_clean(const std::string& data, int size, std::uint64_t seed)
{
    if (data.rfind("synth:", 0) == 0) {
        int n = 0;
        try {
            n = std::stoi(data.substr(6));
        } catch (const std::exception&) {
            throw UsageError("--data synth:<count> needs an integer count");
        }
        if (n <= 0) throw UsageError("--data synth:<count> needs a positive count");
        return synth_cartoons(n, size, size, seed);
    }
    if (!fs::is_directory(data)) throw UsageError("--data must be synth:<count> or an image directory");
    auto imgs = load_image_dir(data);
    if (imgs.empty()) throw UsageError("no images found in " + data);
    return imgs;
}

int run_train(const TrainArgs& a, Manifest& man)
{
    const ArchKind arch = parse_arch(a.arch);
    const VariantKind variant = parse_variant(a.variant);
    const NoiseSettingArg ns = parse_setting(a.setting);
    const std::uint64_t data_seed = Rng::derive_seed(a.seed, 1);
    const std::uint64_t init_seed = Rng::derive_seed(a.seed, 2);
    const std::uint64_t heldout_seed = Rng::derive_seed(a.seed, 3);
    man.seed("data", data_seed);
    man.seed("init", init_seed);
    man.seed("heldout", heldout_seed);
    man.input(a.data);
    man.write(sibling(a.out, "_manifest.json"));

    const auto clean = load_clean(a.data, a.size, data_seed);
    NoiseSpec noise;
    noise.sigma = ns.setting == NoiseSetting::Fixed ? ns.sigma : 0.5 * (ns.lo + ns.hi);
    noise.seed = Rng::derive_seed(data_seed, 1);
    const Dataset data = make_noisy_dataset(clean, noise, a.data);

    TrainConfig cfg;
    cfg.setting = ns.setting;
    cfg.sigma = ns.sigma;
    cfg.sigma_lo = ns.lo;
    cfg.sigma_hi = ns.hi;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.patch = a.size;
    cfg.lr = a.lr;
    cfg.seed = a.seed;
    cfg.dump_path = sibling(a.out, "_dump.pnnw");
    NormSettings norms;
    norms.height = norms.width = a.size;
    const PnnModel init = make_model(arch, variant, a.K, a.J, clean.front().channels(), init_seed, norms);

    TrainResult r = train(init, cfg, data);
    write_weights(a.out, r.model);
    r.trace.save(sibling(a.out, "_trace.csv"));

    // Held-out report at the fixed level (or the middle of the range).
    std::vector<Image> held_clean = a.data.rfind("synth:", 0) == 0 && a.heldout > 0
                                        ? synth_cartoons(a.heldout, a.size, a.size, heldout_seed)
                                        : clean;
    NoiseSpec hn = noise;
    hn.seed = Rng::derive_seed(heldout_seed, 1);
    const Dataset held = make_noisy_dataset(held_clean, hn);
    double p_noisy = 0.0, p_out = 0.0;
    for (const auto& s : held.samples) {
        p_noisy += psnr(s.clean, s.noisy);
        p_out += psnr(s.clean, pnn_forward(r.model, s.noisy, s.sigma * s.sigma).x);
    }
    const double n = static_cast<double>(held.samples.size());
    std::cout << "heldout_psnr_noisy " << format_real(p_noisy / n) << "\n"
              << "heldout_psnr_denoised " << format_real(p_out / n) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// certify

struct CertifyArgs {
    std::string weights, data = "synth:20", target = "f", out;
    int samples = 20, size = 32, max_iter = 500;
    double sigma = 0.08, tol = 1e-6;
    std::uint64_t seed = 0;
};

int run_certify(const CertifyArgs& a, Manifest& man)
{
    if (a.target != "f" && a.target != "h") throw UsageError("--target must be f or h");
    if (a.samples <= 0) throw UsageError("--samples must be > 0");
    const std::uint64_t data_seed = Rng::derive_seed(a.seed, 1);
    man.seed("data", data_seed);
    man.input(a.weights);
    man.input(a.data);
    man.write(sibling(a.out, "_manifest.json"));

    auto clean = load_clean(a.data, a.size, data_seed);
    if (static_cast<int>(clean.size()) > a.samples) clean.resize(static_cast<std::size_t>(a.samples));
    NoiseSpec noise;
    noise.sigma = a.sigma;
    noise.seed = Rng::derive_seed(data_seed, 1);
    const Dataset data = make_noisy_dataset(clean, noise, a.data);
    const TargetMap target = a.target == "f" ? TargetMap::F : TargetMap::H;
    JacobianNormOptions jo;
    jo.tol = a.tol;
    jo.max_iter = a.max_iter;
    jo.seed = a.seed;

    RobustnessReport rep;
    double bound_f = 0.0;
    if (a.weights.rfind("stub:", 0) == 0) {
        double scale = 0.0;
        if (a.weights == "stub:identity")
            scale = 1.0;
        else if (a.weights == "stub:half")
            scale = 0.5;
        else
            throw UsageError("unknown stub '" + a.weights + "' (stub:identity, stub:half)");
        std::vector<double> norms;
        for (const auto& s : data.samples) {
            JacobianProbe p = scaled_identity_probe(s.noisy.shape(), scale);
            if (target == TargetMap::H) p = reflected_probe(p);
            norms.push_back(jacobian_spectral_norm(p, jo).norm);
        }
        rep = summarize(target, norms);
        bound_f = scale;
    } else {
        const PnnModel model = read_weights(a.weights);
        rep = target == TargetMap::F ? lipschitz_estimate(model, data.samples, jo)
                                     : nonexpansiveness_score(model, data.samples, jo);
        ProductBoundOptions po;
        po.height = data.samples.front().noisy.height();
        po.width = data.samples.front().noisy.width();
        bound_f = lipschitz_product_bound(model, po);
    }
    // ||2f - Id|| <= 2 Lip(f) + 1
    const double bound = target == TargetMap::F ? bound_f : 2.0 * bound_f + 1.0;
    write_file_atomic(a.out, rep.csv());
    json summary = json::parse(rep.json());
    summary["product_bound"] = bound;
    summary["bound_holds"] = rep.max <= bound + 1e-9;
    write_file_atomic(sibling(a.out, "_summary.json"), summary.dump(2) + "\n");
    std::cout << "max " << format_real(rep.max) << "\nproduct_bound " << format_real(bound) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// pnp

struct PnpArgs {
    std::string y, kernel = "gauss5-1.0", weights, truth, warm = "auto", beta_sweep, out;
    double sigma = 0.0, beta = 1.0, gamma = 0.0;
    int iters = 500;
    bool unsafe_gamma = false, residual_stop = false;
};

int run_pnp(const PnpArgs& a, Manifest& man)
{
    man.input(a.y);
    man.input(a.weights);
    if (!a.truth.empty()) man.input(a.truth);
    if (fs::is_regular_file(a.kernel)) man.input(a.kernel);
    man.write(sibling(a.out, "_manifest.json"));

    const Image y = read_image(a.y);
    const BlurKernel A = BlurKernel::from_spec(a.kernel);
    const PnnModel model = read_weights(a.weights);
    std::optional<Image> truth;
    if (!a.truth.empty()) truth = read_image(a.truth);

    PnpConfig cfg;
    if (a.gamma > 0.0) cfg.gamma = a.gamma;
    cfg.beta = a.beta;
    cfg.sigma = a.sigma;
    cfg.iterations = a.iters;
    cfg.unsafe_gamma = a.unsafe_gamma;
    cfg.residual_stop = a.residual_stop;
    if (a.warm == "on")
        cfg.warm_start = true;
    else if (a.warm == "off")
        cfg.warm_start = false;
    else if (a.warm != "auto")
        throw UsageError("--warm must be on, off or auto");

    if (!a.beta_sweep.empty()) {
        if (!truth) throw UsageError("--beta-sweep needs --truth");
        const auto betas = parse_list(a.beta_sweep, "--beta-sweep");
        for (double b : betas)
            if (!(b > 0.0)) throw UsageError("--beta-sweep values must be > 0");
        const BetaSweep sw = beta_sweep(y, A, cfg, model, betas, *truth);
        CsvTable t({"beta", "psnr", "best"});
        for (std::size_t i = 0; i < sw.betas.size(); ++i)
            t.add_row({format_real(sw.betas[i]), format_real(sw.psnr[i]), sw.betas[i] == sw.best_beta ? "1" : "0"});
        t.save(sibling(a.out, "_sweep.csv"));
        cfg.beta = sw.best_beta;
        std::cout << "best_beta " << format_real(sw.best_beta) << "\n";
    }
    const PnpResult r = pnp_fb(y, A, cfg, model, truth);
    write_image(a.out, r.x, 16);
    write_file_atomic(sibling(a.out, "_trace.csv"), r.trace.csv());
    std::cout << "gamma " << format_real(r.gamma) << "\nnu " << format_real(r.nu) << "\n";
    if (truth)
        std::cout << "psnr_y " << format_real(psnr(*truth, y)) << "\npsnr_x " << format_real(psnr(*truth, r.x)) << "\n";
    if (r.trace.residual.size() >= 3) {
        const auto mono = residual_monotonicity(r.trace.residual, 1e-7);
        std::cout << "residual_monotone " << (mono.ok ? "yes" : "no at " + std::to_string(mono.first_violation)) << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct Cli {
    CLI::App app{"Proximal solvers and unfolded proximal networks for image denoising and deblurring", "proxnn"};
    DenoiseMapArgs dm;
    TrainArgs tr;
    CertifyArgs ce;
    PnpArgs pp;
    std::string rerun_manifest, rerun_out;
    CLI::App* denoise = nullptr;
    CLI::App* train = nullptr;
    CLI::App* certify = nullptr;
    CLI::App* pnp = nullptr;
    CLI::App* rerun = nullptr;

    Cli()
    {
        app.require_subcommand(1);
        app.set_version_flag("--version", kVersion);

        denoise = app.add_subcommand("denoise-map", "MAP denoising with a proximal solver");
        denoise->add_option("--in", dm.in, "noisy input image")->required();
        denoise->add_option("--out", dm.out, "denoised PNG (16-bit)")->required();
        denoise->add_option("--solver", dm.solver, "dfb | difb | cp | sccp")->capture_default_str();
        denoise->add_option("--nu", dm.nu, "regularization weight")->capture_default_str();
        denoise->add_option("--iters", dm.iters, "iteration budget")->capture_default_str();
        denoise->add_option("--filters", dm.filters, "grad, or a weights file")->capture_default_str();
        denoise->add_option("--layer", dm.layer, "layer of the weights file to use as D")->capture_default_str();
        denoise->add_option("--box", dm.box, "constraint lo,hi")->capture_default_str();
        denoise->add_option("--mu", dm.mu, "primal step mu0 for cp/sccp")->capture_default_str();
        denoise->add_option("--tol", dm.tol, "relative primal change stopping threshold")->capture_default_str();

        train = app.add_subcommand("train", "train an unfolded proximal network");
        train->add_option("--arch", tr.arch, "ddfb | ddifb | dcp | dsccp")->capture_default_str();
        train->add_option("--variant", tr.variant, "lno | lfo")->capture_default_str();
        train->add_option("--K", tr.K, "layers")->capture_default_str();
        train->add_option("--J", tr.J, "features")->capture_default_str();
        train->add_option("--data", tr.data, "synth:<count> or an image directory")->capture_default_str();
        train->add_option("--size", tr.size, "synthetic image / patch size")->capture_default_str();
        train->add_option("--setting", tr.setting, "fixed:<sigma> or uniform:<lo>,<hi>")->capture_default_str();
        train->add_option("--epochs", tr.epochs)->capture_default_str();
        train->add_option("--batch", tr.batch)->capture_default_str();
        train->add_option("--lr", tr.lr)->capture_default_str();
        train->add_option("--seed", tr.seed)->capture_default_str();
        train->add_option("--heldout", tr.heldout, "held-out synthetic images for the final report")
            ->capture_default_str();
        train->add_option("--out", tr.out, "weights file")->required();

        certify = app.add_subcommand("certify", "Jacobian-norm robustness report and product bound");
        certify->add_option("--weights", ce.weights, "weights file, stub:identity or stub:half")->required();
        certify->add_option("--data", ce.data, "synth:<count> or an image directory")->capture_default_str();
        certify->add_option("--size", ce.size)->capture_default_str();
        certify->add_option("--sigma", ce.sigma, "noise level of the probe set (nu = sigma^2)")->capture_default_str();
        certify->add_option("--target", ce.target, "f or h = 2f - Id")->capture_default_str();
        certify->add_option("--samples", ce.samples)->capture_default_str();
        certify->add_option("--seed", ce.seed)->capture_default_str();
        certify->add_option("--tol", ce.tol)->capture_default_str();
        certify->add_option("--max-iter", ce.max_iter)->capture_default_str();
        certify->add_option("--out", ce.out, "per-sample CSV")->required();

        pnp = app.add_subcommand("pnp", "plug-and-play forward-backward deblurring");
        pnp->add_option("--y", pp.y, "blurred noisy observation")->required();
        pnp->add_option("--kernel", pp.kernel, "delta, uniform3, gaussN-S or a text file")->capture_default_str();
        pnp->add_option("--weights", pp.weights, "denoiser weights")->required();
        pnp->add_option("--truth", pp.truth, "ground truth for the PSNR trace");
        pnp->add_option("--sigma", pp.sigma, "measurement noise level")->capture_default_str();
        pnp->add_option("--beta", pp.beta)->capture_default_str();
        pnp->add_option("--beta-sweep", pp.beta_sweep, "comma-separated beta grid");
        pnp->add_option("--gamma", pp.gamma, "step size (default 1.99/||A||^2)");
        pnp->add_flag("--unsafe-gamma", pp.unsafe_gamma, "allow gamma >= 2/||A||^2")->capture_default_str();
        pnp->add_option("--iters", pp.iters)->capture_default_str();
        pnp->add_option("--warm", pp.warm, "on | off | auto")->capture_default_str();
        pnp->add_flag("--residual-stop", pp.residual_stop, "stop when the residual drops below 1e-8 ||y||")
            ->capture_default_str();
        pnp->add_option("--out", pp.out, "restored PNG (16-bit)")->required();

        rerun = app.add_subcommand("rerun", "replay a run manifest");
        rerun->add_option("manifest", rerun_manifest)->required();
        rerun->add_option("--out", rerun_out, "replacement for the recorded --out");
    }
};

int dispatch(Cli& cli, const std::vector<std::string>& args);

int run_from_manifest(const std::string& path, const std::string& out)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw UsageError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("tool", "") != "proxnn") throw UsageError("'" + path + "' is not a proxnn manifest");
    if (j.value("version", "") != kVersion)
        throw UsageError("manifest was written by proxnn " + j.value("version", "?") + ", this is " + kVersion);
    for (const auto& [file, hash] : j.at("inputs").items()) {
        if (!fs::is_regular_file(file)) throw UsageError("recorded input '" + file + "' is missing");
        if (hex64(fnv1a(read_file(file))) != hash.get<std::string>())
            throw UsageError("recorded input '" + file + "' has changed since the run");
    }
    std::vector<std::string> args = j.at("args").get<std::vector<std::string>>();
    if (!out.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < args.size(); ++i)
            if (args[i] == "--out") {
                args[i + 1] = out;
                replaced = true;
            }
        for (auto& s : args)
            if (s.rfind("--out=", 0) == 0) {
                s = "--out=" + out;
                replaced = true;
            }
        if (!replaced) throw UsageError("manifest has no --out argument to replace");
    }
    Cli fresh;
    return dispatch(fresh, args);
}

int dispatch(Cli& cli, const std::vector<std::string>& args)
{
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        cli.app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return cli.app.exit(e) == 0 ? kOk : kUsage;
    }
    const std::string command = args.empty() ? std::string{} : args.front();
    try {
        if (*cli.rerun) return run_from_manifest(cli.rerun_manifest, cli.rerun_out);
        Manifest man(command, args);
        if (*cli.denoise) {
            man.resolve(*cli.denoise);
            return run_denoise_map(cli.dm, man);
        }
        if (*cli.train) {
            man.resolve(*cli.train);
            man.seed("train", cli.tr.seed);
            return run_train(cli.tr, man);
        }
        if (*cli.certify) {
            man.resolve(*cli.certify);
            man.seed("power_iteration", cli.ce.seed);
            return run_certify(cli.ce, man);
        }
        if (*cli.pnp) {
            man.resolve(*cli.pnp);
            return run_pnp(cli.pp, man);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << cli.app.help();
        return kUsage;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const TrainingError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    }
    return kUsage;
}

}  // namespace

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    Cli cli;
    return dispatch(cli, args);
}
