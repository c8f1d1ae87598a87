#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "proxnn/csv.hpp"
#include "proxnn/image.hpp"
#include "proxnn/image_io.hpp"
#include "proxnn/noise.hpp"
#include "proxnn/pnp.hpp"
#include "proxnn/weights_io.hpp"

using namespace proxnn;
namespace fs = std::filesystem;

namespace {

struct Workdir {
    fs::path dir;
    Workdir()
    {
        dir = fs::temp_directory_path() / "proxnn_cli_tests";
        fs::remove_all(dir);
        fs::create_directories(dir);
        Image clean = synth_cartoon(24, 24, 5);
        NoiseSpec ns;
        ns.sigma = 0.08;
        ns.seed = 3;
        write_image(path("clean.png"), clean);
        write_image(path("noisy.png"), add_noise(clean, ns));
        ns.sigma = 0.03;
        write_image(path("blurred.png"), add_noise(blur_apply(BlurKernel::gaussian(5, 1.0), clean), ns));
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

const Workdir& work()
{
    static Workdir w;
    return w;
}

struct Run {
    int code = -1;
    std::string output;
};

Run cli(const std::string& args)
{
    const std::string log = work().path("last.log");
    const std::string cmd = std::string("cd '") + work().dir.string() + "' && '" PROXNN_CLI_PATH "' " + args + " > '" +
                            log + "' 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_file(log);
    return r;
}

std::string bytes(const std::string& name) { return read_file(work().path(name)); }

// Reruns a manifest into a new output stem and compares every sibling file byte for byte.
void check_rerun(const std::string& stem, const std::string& ext, const std::vector<std::string>& suffixes)
{
    const Run r = cli("rerun " + stem + "_manifest.json --out re_" + stem + ext);
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(bytes(stem + ext) == bytes("re_" + stem + ext));
    for (const auto& s : suffixes) CHECK(bytes(stem + s) == bytes("re_" + stem + s));
}

}  // namespace

TEST_CASE("usage errors exit with 2")
{
    Run r = cli("denoise-map --out x.png");
    CHECK(r.code == 2);
    CHECK(r.output.find("--in") != std::string::npos);
    CHECK(cli("train --arch resnet --out w.pnnw").code == 2);
    CHECK(cli("denoise-map --in noisy.png --out x.png --solver newton").code == 2);
    CHECK(cli("denoise-map --in missing.png --out x.png").code == 2);
    CHECK(cli("frobnicate").code == 2);
}

TEST_CASE("denoise-map")
{
    Run r = cli("denoise-map --in noisy.png --out zero.png --solver dfb --nu 0");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const Image in = read_image(work().path("noisy.png"));
    CHECK(max_abs_diff(read_image(work().path("zero.png")), project_box(in, BoxConstraint::unit())) <= 1e-12);

    r = cli("denoise-map --in noisy.png --out dfb.png --solver dfb --nu 0.05 --iters 5000 --tol 0");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    r = cli("denoise-map --in noisy.png --out sccp.png --solver sccp --nu 0.05 --iters 5000 --tol 0");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(max_abs_diff(read_image(work().path("dfb.png")), read_image(work().path("sccp.png"))) < 1.0 / 255.0);
    CHECK(fs::exists(work().path("dfb_trace.csv")));
    CHECK(fs::exists(work().path("dfb_manifest.json")));
    const auto man = nlohmann::json::parse(bytes("dfb_manifest.json"));
    CHECK(man["command"] == "denoise-map");
    CHECK(man["inputs"].contains("noisy.png"));

    check_rerun("dfb", ".png", {"_trace.csv"});
}

TEST_CASE("train, certify and pnp")
{
    Run r = cli("train --data synth:16 --size 16 --K 2 --J 4 --epochs 1 --lr 0 --heldout 4 --out frozen1.pnnw");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    r = cli("train --data synth:16 --size 16 --K 2 --J 4 --epochs 3 --lr 0 --heldout 4 --out frozen3.pnnw");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(bytes("frozen1.pnnw") == bytes("frozen3.pnnw"));

    r = cli("train --data synth:16 --size 16 --K 2 --J 4 --epochs 2 --heldout 4 --out w.pnnw");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(r.output.find("heldout_psnr_denoised") != std::string::npos);
    CHECK(bytes("w.pnnw") != bytes("frozen1.pnnw"));
    check_rerun("w", ".pnnw", {"_trace.csv"});

    r = cli("certify --weights stub:half --target h --samples 3 --size 16 --out half.csv");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    auto summary = nlohmann::json::parse(bytes("half_summary.json"));
    CHECK(summary["max"].get<double>() == 0.0);

    r = cli("certify --weights w.pnnw --target f --samples 3 --size 16 --out rep.csv");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    summary = nlohmann::json::parse(bytes("rep_summary.json"));
    CHECK(summary["bound_holds"].get<bool>());
    CHECK(summary["max"].get<double>() <= summary["product_bound"].get<double>());
    check_rerun("rep", ".csv", {"_summary.json"});

    r = cli("pnp --y blurred.png --kernel delta --gamma 2.1 --weights w.pnnw --out bad.png");
    CHECK(r.code == 2);
    r = cli("pnp --y blurred.png --kernel delta --gamma 2.1 --unsafe-gamma --iters 3 --weights w.pnnw --out unsafe.png");
    CHECK(r.code == 0);

    r = cli("pnp --y blurred.png --kernel delta --gamma 1 --iters 1 --warm off --sigma 0.03 --weights w.pnnw --out one.png");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const PnnModel m = read_weights(work().path("w.pnnw"));
    const Image y = read_image(work().path("blurred.png"));
    const Image once = pnn_forward(m, y, 0.03 * 0.03).x;
    CHECK(max_abs_diff(read_image(work().path("one.png")), once) <= 0.5 / 65535.0 + 1e-12);

    r = cli("pnp --y blurred.png --truth clean.png --kernel gauss5-1.0 --sigma 0.03 --iters 20 "
            "--beta-sweep 0.6,0.8,1.0,1.2,1.4 --weights w.pnnw --out sweep.png");
    REQUIRE_MESSAGE(r.code == 0, r.output);
    const std::string sweep = bytes("sweep_sweep.csv");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);
    CHECK(sweep.rfind("beta,psnr,best\n", 0) == 0);
    CHECK(std::count(sweep.begin(), sweep.end(), '1') >= 1);
    int marked = 0;
    for (std::size_t p = sweep.find('\n'); p != std::string::npos && p + 1 < sweep.size(); p = sweep.find('\n', p + 1)) {
        const std::size_t e = sweep.find('\n', p + 1);
        const std::string line = sweep.substr(p + 1, e - p - 1);
        if (line.ends_with(",1")) ++marked;
    }
    CHECK(marked == 1);
    check_rerun("sweep", ".png", {"_trace.csv", "_sweep.csv"});
}

TEST_CASE("rerun refuses a tampered input")
{
    REQUIRE(cli("denoise-map --in noisy.png --out t.png --nu 0.02 --iters 50").code == 0);
    const std::string original = bytes("noisy.png");
    write_image(work().path("noisy.png"), Image(1, 24, 24, 0.5));
    CHECK(cli("rerun t_manifest.json --out t2.png").code != 0);
    write_file_atomic(work().path("noisy.png"), original);
    CHECK(cli("rerun t_manifest.json --out t2.png").code == 0);
}
