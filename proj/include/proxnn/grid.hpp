#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "proxnn/errors.hpp"

namespace proxnn {

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t size() const
    {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }
    std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense channel-major 3-tensor (channels x height x width), row-major within a channel.
/// The tag separates primal images from dual feature maps at the type level.
template <class Tag>
class Grid {
public:
    Grid() = default;
    Grid(int channels, int height, int width, double fill = 0.0) : Grid(Shape{channels, height, width}, fill) {}
    explicit Grid(Shape shape, double fill = 0.0) : shape_(shape), data_(checked_size(shape), fill) {}
    Grid(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values))
    {
        if (data_.size() != checked_size(shape)) {
            throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape));
        }
    }

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.channels; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    std::span<double> channel(int c) { return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane()); }
    std::span<const double> channel(int c) const
    {
        return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
    }

    bool operator==(const Grid&) const = default;

private:
    static std::size_t checked_size(const Shape& s)
    {
        if (s.channels < 0 || s.height < 0 || s.width < 0) throw ShapeError("negative dimension in " + to_string(s));
        return s.size();
    }
    std::size_t index(int c, int y, int x) const
    {
        return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
    }

    Shape shape_{};
    std::vector<double> data_;
};

struct PrimalTag {};
struct DualTag {};

/// Primal-domain tensor: images, observations and primal iterates.
using Image = Grid<PrimalTag>;
/// Dual-domain tensor: outputs of the analysis operator.
using FeatureMap = Grid<DualTag>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what)
{
    if (!(a == b)) throw ShapeError(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
}

// Flat-vector arithmetic shared by every module.

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double diff_norm(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

template <class Tag>
double dot(const Grid<Tag>& a, const Grid<Tag>& b)
{
    require_same_shape(a.shape(), b.shape(), "dot");
    return dot(a.values(), b.values());
}

template <class Tag>
double norm2(const Grid<Tag>& a)
{
    return norm2(a.values());
}

template <class Tag>
double diff_norm(const Grid<Tag>& a, const Grid<Tag>& b)
{
    require_same_shape(a.shape(), b.shape(), "diff_norm");
    return diff_norm(a.values(), b.values());
}

template <class Tag>
double max_abs_diff(const Grid<Tag>& a, const Grid<Tag>& b)
{
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    return max_abs_diff(a.values(), b.values());
}

/// a*x + b*y
template <class Tag>
Grid<Tag> lincomb(double a, const Grid<Tag>& x, double b, const Grid<Tag>& y)
{
    require_same_shape(x.shape(), y.shape(), "lincomb");
    Grid<Tag> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

template <class Tag>
Grid<Tag> scaled(const Grid<Tag>& x, double a)
{
    Grid<Tag> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i];
    return out;
}

template <class Tag>
bool all_finite(const Grid<Tag>& x)
{
    for (double v : x.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace proxnn
