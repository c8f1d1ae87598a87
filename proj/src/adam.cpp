#include "proxnn/adam.hpp"

#include <cmath>

#include "proxnn/errors.hpp"
#include "proxnn/weights_io.hpp"

namespace proxnn {

namespace {

std::string segment_name(const std::vector<ParamSegment>& layout, std::size_t i)
{
    for (const auto& s : layout)
        if (i >= s.offset && i < s.offset + s.length) return s.name + "[" + std::to_string(i - s.offset) + "]";
    return "param[" + std::to_string(i) + "]";
}

}  // namespace

void adam_step(AdamState& s, const GradPack& grads, std::vector<double>& params, const std::vector<ParamSegment>& layout)
{
    const auto& g = grads.values;
    if (g.size() != params.size())
        throw ShapeError("adam_step: " + std::to_string(g.size()) + " gradients for " + std::to_string(params.size()) +
                         " parameters");
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i])) throw TrainingError("non-finite gradient for " + segment_name(layout, i));
    if (s.m.empty()) {
        s.m.assign(g.size(), 0.0);
        s.v.assign(g.size(), 0.0);
    }
    if (s.m.size() != g.size() || s.v.size() != g.size()) throw ShapeError("adam_step: moment size mismatch");

    ++s.t;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

std::string serialize_adam(const AdamState& s)
{
    nlohmann::json h;
    h["kind"] = "adam-state";
    h["t"] = s.t;
    h["lr"] = s.lr;
    h["beta1"] = s.beta1;
    h["beta2"] = s.beta2;
    h["eps"] = s.eps;
    const int n = static_cast<int>(s.m.size());
    return encode_container(h, {TensorBlob{"m", {n}, s.m}, TensorBlob{"v", {n}, s.v}});
}

AdamState deserialize_adam(const std::string& bytes)
{
    const Container c = decode_container(bytes);
    if (c.header.value("kind", std::string{}) != "adam-state") throw FormatError("not an Adam state blob");
    if (c.tensors.size() != 2 || c.tensors[0].name != "m" || c.tensors[1].name != "v")
        throw FormatError("Adam state must hold tensors m and v");
    AdamState s;
    try {
        s.t = c.header.at("t").get<long long>();
        s.lr = c.header.at("lr").get<double>();
        s.beta1 = c.header.at("beta1").get<double>();
        s.beta2 = c.header.at("beta2").get<double>();
        s.eps = c.header.at("eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("Adam state header: ") + e.what());
    }
    s.m = c.tensors[0].values;
    s.v = c.tensors[1].values;
    if (s.m.size() != s.v.size()) throw FormatError("Adam moments differ in length");
    return s;
}

}  // namespace proxnn
