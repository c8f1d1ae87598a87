#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "proxnn/csv.hpp"
#include "proxnn/image_io.hpp"
#include "proxnn/weights_io.hpp"
#include "support.hpp"

using namespace proxnn;

namespace {

NormSettings norms8()
{
    NormSettings n;
    n.height = n.width = 8;
    return n;
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("proxnn_test_" + name)).string();
}

}  // namespace

TEST_SUITE("io-formats")
{
    TEST_CASE("weights round trip is bit exact")
    {
        for (auto a : {ArchKind::DDFB, ArchKind::DDiFB, ArchKind::DCP, ArchKind::DScCP})
            for (auto v : {VariantKind::LNO, VariantKind::LFO}) {
                PnnModel m = make_model(a, v, 3, 4, 1, 9, norms8());
                m.box = BoxConstraint{-0.5, 2.0};
                for (double& s : m.log_mu) s = -0.375;
                const std::string bytes = serialize_weights(m);
                CHECK(bytes.rfind("PNNW1\n", 0) == 0);
                const PnnModel back = deserialize_weights(bytes);
                CHECK(serialize_weights(back) == bytes);
                CHECK(back.arch == a);
                CHECK(back.variant == v);
                CHECK(back.box == m.box);
                CHECK(back.log_mu == m.log_mu);
            }
    }

    TEST_CASE("payload length for a K=20, J=64, C=3 model")
    {
        NormSettings n;
        n.height = n.width = 8;
        n.tol = 1e-3;
        const PnnModel m = make_model(ArchKind::DDFB, VariantKind::LNO, 20, 64, 3, 1, n);
        const Container c = decode_container(serialize_weights(m));
        std::size_t bytes = 0;
        std::size_t values = 0;
        for (const auto& t : c.tensors) values += t.values.size();
        bytes = 4 * values;
        CHECK(bytes == 138240);
        const std::string s = serialize_weights(m);
        const std::size_t header_end = s.find('\n', 6);
        CHECK(s.size() - header_end - 1 == 138240);
    }

    TEST_CASE("format errors")
    {
        const PnnModel m = make_model(ArchKind::DCP, VariantKind::LNO, 3, 2, 1, 2, norms8());
        std::string bytes = serialize_weights(m);
        std::string bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_weights(bad), FormatError);

        try {
            deserialize_weights(bytes.substr(0, bytes.size() - 10));
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("layer3.forward") != std::string::npos);
        }

        Container c = decode_container(bytes);
        c.tensors.erase(c.tensors.begin() + 2);
        CHECK_THROWS_AS(deserialize_weights(encode_container(c.header, c.tensors)), FormatError);

        c = decode_container(bytes);
        c.header["arch"] = "unet";
        CHECK_THROWS_AS(deserialize_weights(encode_container(c.header, c.tensors)), FormatError);
        CHECK_THROWS_AS(decode_container("PNNW1\n{not json\n"), FormatError);
    }

    TEST_CASE("file round trip")
    {
        const PnnModel m = make_model(ArchKind::DScCP, VariantKind::LFO, 2, 3, 1, 6, norms8());
        const std::string p = temp_path("w.pnnw");
        write_weights(p, m);
        CHECK(serialize_weights(read_weights(p)) == serialize_weights(m));
        std::filesystem::remove(p);
    }

    TEST_CASE("images")
    {
        Image img(3, 5, 7);
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 256) / 255.0;
        for (const char* ext : {".png", ".ppm"}) {
            const std::string p = temp_path(std::string("img") + ext);
            write_image(p, img);
            const Image back = read_image(p);
            CHECK(back.shape() == img.shape());
            CHECK(max_abs_diff(back, img) <= 1e-12);
            std::filesystem::remove(p);
        }
        Image g(1, 4, 4);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i * 4000) / 65535.0;
        const std::string p16 = temp_path("g16.png");
        write_image(p16, g, 16);
        CHECK(max_abs_diff(read_image(p16), g) <= 1e-12);
        std::filesystem::remove(p16);
        CHECK_THROWS(read_image(temp_path("missing.png")));
    }

    TEST_CASE("csv formatting")
    {
        CsvTable t({"a", "b"});
        t.add_row({0.1, 1.0 / 3.0});
        const std::string s = t.str();
        CHECK(s.rfind("a,b\n", 0) == 0);
        CHECK(std::stod(s.substr(4, s.find(',', 4) - 4)) == 0.1);
        CHECK(std::stod(s.substr(s.find(',', 4) + 1)) == 1.0 / 3.0);
        CHECK_THROWS(t.add_row({1.0}));
    }
}
