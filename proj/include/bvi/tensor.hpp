#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "bvi/common.hpp"
#include "bvi/image.hpp"

namespace bvi {

// Planar CHW tensor of doubles.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : c(c), h(h), w(w), v(static_cast<size_t>(c) * h * w, fill) {}

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    double* plane(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
    const double* plane(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }

    double& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline Tensor tensor_from_image(const Image& img) {
    Tensor t(img.channels, img.h, img.w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(c, y, x) = img.at(y, x, c);
    return t;
}

inline Image image_from_tensor(const Tensor& t, bool clamp = false) {
    Image img(t.h, t.w, t.c);
    for (int c = 0; c < t.c; ++c)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x) {
                double v = t.at(c, y, x);
                if (clamp) v = std::min(1.0, std::max(0.0, v));
                img.at(y, x, c) = v;
            }
    return img;
}

// One square convolution's weights and biases plus their gradient buffers.
struct ConvParam {
    std::string name;
    int out_c = 0, in_c = 0, k = 1;
    std::vector<double> w;   // out_c * in_c * k * k
    std::vector<double> b;   // out_c
    std::vector<double> gw;  // same layout as w
    std::vector<double> gb;

    void init_shape(const std::string& nm, int oc, int ic, int kk) {
        name = nm;
        out_c = oc;
        in_c = ic;
        k = kk;
        w.assign(static_cast<size_t>(oc) * ic * kk * kk, 0.0);
        b.assign(static_cast<size_t>(oc), 0.0);
        gw.assign(w.size(), 0.0);
        gb.assign(b.size(), 0.0);
    }

    size_t count() const { return w.size() + b.size(); }

    void zero_grad() {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
    }

    double& wat(int oc, int ic, int ky, int kx) {
        return w[((static_cast<size_t>(oc) * in_c + ic) * k + ky) * k + kx];
    }
};

// All convolution parameters of one network instance. Instances that share
// weights reference the same ParameterSet.
struct ParameterSet {
    std::string group_id;
    std::vector<ConvParam> convs;

    size_t param_count() const {
        size_t n = 0;
        for (const auto& c : convs) n += c.count();
        return n;
    }

    void zero_grad() {
        for (auto& c : convs) c.zero_grad();
    }

    bool grads_finite() const {
        for (const auto& c : convs) {
            for (double g : c.gw)
                if (!std::isfinite(g)) return false;
            for (double g : c.gb)
                if (!std::isfinite(g)) return false;
        }
        return true;
    }

    uint64_t fingerprint() const {
        uint64_t h = fnv1a64(group_id);
        for (const auto& c : convs) {
            h = fnv1a64(c.w.data(), c.w.size() * sizeof(double), h);
            h = fnv1a64(c.b.data(), c.b.size() * sizeof(double), h);
        }
        return h;
    }
};

// Fan-in scaled uniform init: unit-gain weights keep activation variance
// constant through linear convs; gain sqrt(2) compensates ReLU halving.
// `scale` shrinks the range, used to start the final output convolution near
// zero so the untrained network is an averaging predictor.
inline void init_conv(ConvParam& p, Rng& rng, double scale = 1.0, double gain = 1.0) {
    double fan_in = static_cast<double>(p.in_c) * p.k * p.k;
    double limit = scale * gain * std::sqrt(3.0 / std::max(1.0, fan_in));
    for (double& x : p.w) x = rng.uniform(-limit, limit);
    for (double& x : p.b) x = 0.0;
}

}  // namespace bvi
