#include "proxnn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "proxnn/csv.hpp"

namespace proxnn {
namespace {

bool has_suffix(const std::string& s, const std::string& suffix)
{
    if (s.size() < suffix.size()) return false;
    std::string tail = s.substr(s.size() - suffix.size());
    std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return tail == suffix;
}

unsigned to_code(double v, unsigned maxval)
{
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(c * maxval));
}

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image read_png(const std::string& path)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw FormatError("cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth < 8) depth = 8;
    if (depth == 16) png_set_swap(png);  // host little-endian 16-bit samples
    png_read_update_info(png, info);
    const int file_channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> raw(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int out_channels = file_channels >= 3 ? 3 : 1;
    const double maxval = depth == 16 ? 65535.0 : 255.0;
    Image img(out_channels, static_cast<int>(height), static_cast<int>(width));
    for (png_uint_32 y = 0; y < height; ++y)
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < out_channels; ++c) {
                const std::size_t idx = static_cast<std::size_t>(x) * file_channels + c;
                unsigned code;
                if (depth == 16) {
                    const unsigned char* p = rows[y] + 2 * idx;
                    code = static_cast<unsigned>(p[0]) | (static_cast<unsigned>(p[1]) << 8);
                } else {
                    code = rows[y][idx];
                }
                img.at(c, static_cast<int>(y), static_cast<int>(x)) = code / maxval;
            }
    return img;
}

void write_png(const std::string& path, const Image& img, int bit_depth)
{
    const int channels = img.channels();
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw FormatError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("failed writing PNG '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
    const int bytes = bit_depth / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * channels * bytes);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < channels; ++c) {
                const unsigned code = to_code(img.at(c, y, x), maxval);
                const std::size_t idx = (static_cast<std::size_t>(x) * channels + c) * bytes;
                if (bytes == 2) {
                    row[idx] = static_cast<unsigned char>(code >> 8);  // PNG is big-endian
                    row[idx + 1] = static_cast<unsigned char>(code & 0xff);
                } else {
                    row[idx] = static_cast<unsigned char>(code);
                }
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void skip_pnm_space(std::istream& in)
{
    for (;;) {
        const int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            return;
        }
    }
}

Image read_pnm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw FormatError("'" + path + "' is not a binary PGM/PPM");
    int width = 0, height = 0, maxval = 0;
    skip_pnm_space(in);
    in >> width;
    skip_pnm_space(in);
    in >> height;
    skip_pnm_space(in);
    in >> maxval;
    if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
        throw FormatError("bad PNM header in '" + path + "'");
    in.get();
    const int channels = magic == "P6" ? 3 : 1;
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("truncated PNM '" + path + "'");
    Image img(channels, height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t idx = ((static_cast<std::size_t>(y) * width + x) * channels + c) * bytes;
                const unsigned code = bytes == 2 ? (static_cast<unsigned>(raw[idx]) << 8) | raw[idx + 1] : raw[idx];
                img.at(c, y, x) = static_cast<double>(code) / maxval;
            }
    return img;
}

void write_pnm(const std::string& path, const Image& img, int bit_depth)
{
    const int channels = img.channels();
    const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
    const int bytes = bit_depth / 8;
    std::ostringstream out;
    out << (channels == 3 ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
    std::string data(static_cast<std::size_t>(img.width()) * img.height() * channels * bytes, '\0');
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < channels; ++c) {
                const unsigned code = to_code(img.at(c, y, x), maxval);
                const std::size_t idx = ((static_cast<std::size_t>(y) * img.width() + x) * channels + c) * bytes;
                if (bytes == 2) {
                    data[idx] = static_cast<char>(code >> 8);
                    data[idx + 1] = static_cast<char>(code & 0xff);
                } else {
                    data[idx] = static_cast<char>(code);
                }
            }
    write_file_atomic(path, out.str() + data);
}

}  // namespace

Image read_image(const std::string& path)
{
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm") || has_suffix(path, ".pnm")) return read_pnm(path);
    return read_png(path);
}

void write_image(const std::string& path, const Image& img, int bit_depth)
{
    if (bit_depth != 8 && bit_depth != 16) throw ParameterError("write_image: bit depth must be 8 or 16");
    if (img.channels() != 1 && img.channels() != 3)
        throw ShapeError("write_image: only 1- or 3-channel images can be stored");
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm") || has_suffix(path, ".pnm")) {
        write_pnm(path, img, bit_depth);
        return;
    }
    const std::string tmp = path + ".tmp";
    write_png(tmp, img, bit_depth);
    commit_file(tmp, path);
}

}  // namespace proxnn
