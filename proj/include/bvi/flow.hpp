#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bvi/image.hpp"

namespace bvi {

// Dense displacement field in pixels per frame interval, (y*w + x)*2 + {u,v}.
struct FlowField {
    int h = 0, w = 0;
    std::vector<double> uv;

    FlowField() = default;
    FlowField(int h, int w) : h(h), w(w), uv(static_cast<size_t>(h) * w * 2, 0.0) {}

    double& u(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    double& v(int y, int x) { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }
    double u(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2]; }
    double v(int y, int x) const { return uv[(static_cast<size_t>(y) * w + x) * 2 + 1]; }

    bool all_finite() const {
        for (double x : uv)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

struct FlowEstimatorConfig {
    double alpha = 0.02;        // smoothness weight, tuned for [0,1] intensities
    int iterations = 400;
    double presmooth_sigma = 0.8;
};

namespace detail {

inline Image gaussian_blur_gray(const Image& in, double sigma) {
    if (sigma <= 0) return in;
    int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<size_t>(i + radius)];
    }
    for (double& v : k) v /= sum;
    Image tmp(in.h, in.w, 1), out(in.h, in.w, 1);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::min(in.w - 1, std::max(0, x + i));
                acc += k[static_cast<size_t>(i + radius)] * in.at(y, xx, 0);
            }
            tmp.at(y, x, 0) = acc;
        }
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::min(in.h - 1, std::max(0, y + i));
                acc += k[static_cast<size_t>(i + radius)] * tmp.at(yy, x, 0);
            }
            out.at(y, x, 0) = acc;
        }
    return out;
}

}  // namespace detail

// Classical variational estimator: brightness-constancy data term plus
// quadratic smoothness, solved by fixed-point iterations on the
// Euler-Lagrange equations with the standard 4/8-neighbor average stencil.
inline FlowField estimate_flow(const Image& a, const Image& b,
                               const FlowEstimatorConfig& cfg = {}) {
    if (!a.same_shape(b)) throw invalid_input("estimate_flow: shape mismatch");
    for (double v : a.px)
        if (!std::isfinite(v)) throw numeric_error("estimate_flow: non-finite input");
    for (double v : b.px)
        if (!std::isfinite(v)) throw numeric_error("estimate_flow: non-finite input");

    Image ga = detail::gaussian_blur_gray(to_gray(a), cfg.presmooth_sigma);
    Image gb = detail::gaussian_blur_gray(to_gray(b), cfg.presmooth_sigma);
    const int h = a.h, w = a.w;
    auto at = [&](const Image& img, int y, int x) {
        y = std::min(h - 1, std::max(0, y));
        x = std::min(w - 1, std::max(0, x));
        return img.at(y, x, 0);
    };

    std::vector<double> ex(static_cast<size_t>(h) * w), ey(ex.size()), et(ex.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            ex[i] = 0.25 * (at(ga, y, x + 1) - at(ga, y, x) + at(ga, y + 1, x + 1) -
                            at(ga, y + 1, x) + at(gb, y, x + 1) - at(gb, y, x) +
                            at(gb, y + 1, x + 1) - at(gb, y + 1, x));
            ey[i] = 0.25 * (at(ga, y + 1, x) - at(ga, y, x) + at(ga, y + 1, x + 1) -
                            at(ga, y, x + 1) + at(gb, y + 1, x) - at(gb, y, x) +
                            at(gb, y + 1, x + 1) - at(gb, y, x + 1));
            et[i] = 0.25 * (at(gb, y, x) - at(ga, y, x) + at(gb, y + 1, x) - at(ga, y + 1, x) +
                            at(gb, y, x + 1) - at(ga, y, x + 1) + at(gb, y + 1, x + 1) -
                            at(ga, y + 1, x + 1));
        }

    std::vector<double> u(ex.size(), 0.0), v(ex.size(), 0.0), ubar(ex.size()), vbar(ex.size());
    auto get = [&](const std::vector<double>& f, int y, int x) {
        y = std::min(h - 1, std::max(0, y));
        x = std::min(w - 1, std::max(0, x));
        return f[static_cast<size_t>(y) * w + x];
    };
    const double a2 = cfg.alpha * cfg.alpha;
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y) * w + x;
                ubar[i] = (get(u, y - 1, x) + get(u, y + 1, x) + get(u, y, x - 1) +
                           get(u, y, x + 1)) / 6.0 +
                          (get(u, y - 1, x - 1) + get(u, y - 1, x + 1) + get(u, y + 1, x - 1) +
                           get(u, y + 1, x + 1)) / 12.0;
                vbar[i] = (get(v, y - 1, x) + get(v, y + 1, x) + get(v, y, x - 1) +
                           get(v, y, x + 1)) / 6.0 +
                          (get(v, y - 1, x - 1) + get(v, y - 1, x + 1) + get(v, y + 1, x - 1) +
                           get(v, y + 1, x + 1)) / 12.0;
            }
        for (size_t i = 0; i < u.size(); ++i) {
            double t = (ex[i] * ubar[i] + ey[i] * vbar[i] + et[i]) /
                       (a2 + ex[i] * ex[i] + ey[i] * ey[i]);
            u[i] = ubar[i] - ex[i] * t;
            v[i] = vbar[i] - ey[i] * t;
        }
    }

    FlowField f(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.u(y, x) = u[static_cast<size_t>(y) * w + x];
            f.v(y, x) = v[static_cast<size_t>(y) * w + x];
        }
    return f;
}

// ---------------------------------------------------------------------------
// Precomputed flow rasters: little-endian float32 H*W*2 plus a JSON sidecar
// {width, height} next to the raster.

inline void write_flow_raster(const std::filesystem::path& path, const FlowField& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("write_flow_raster: cannot open " + path.string());
    std::vector<float> buf(f.uv.size());
    for (size_t i = 0; i < f.uv.size(); ++i) buf[i] = static_cast<float>(f.uv[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    nlohmann::json side{{"width", f.w}, {"height", f.h}};
    std::ofstream js(path.string() + ".json");
    js << side.dump() << "\n";
}

inline FlowField read_flow_raster(const std::filesystem::path& path) {
    std::ifstream js(path.string() + ".json");
    if (!js) throw invalid_input("read_flow_raster: missing sidecar for " + path.string());
    nlohmann::json side;
    try {
        js >> side;
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input(std::string("read_flow_raster: sidecar parse error: ") + e.what());
    }
    int w = side.at("width").get<int>();
    int h = side.at("height").get<int>();
    FlowField f(h, w);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("read_flow_raster: cannot open " + path.string());
    std::vector<float> buf(f.uv.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw invalid_input("read_flow_raster: truncated raster " + path.string());
    for (size_t i = 0; i < buf.size(); ++i) f.uv[i] = buf[i];
    return f;
}

// Supplies pairwise flow between sequence positions, either from the built-in
// estimator or from a directory of precomputed rasters.
class FlowSource {
public:
    virtual ~FlowSource() = default;
    virtual FlowField flow(const Image& a, const Image& b, int from_index, int to_index) = 0;
    virtual std::string provenance() const = 0;
};

class VariationalFlowSource : public FlowSource {
public:
    explicit VariationalFlowSource(FlowEstimatorConfig cfg = {}) : cfg_(cfg) {}
    FlowField flow(const Image& a, const Image& b, int, int) override {
        return estimate_flow(a, b, cfg_);
    }
    std::string provenance() const override {
        return "horn-schunck(alpha=" + std::to_string(cfg_.alpha) +
               ",iterations=" + std::to_string(cfg_.iterations) + ")";
    }

private:
    FlowEstimatorConfig cfg_;
};

class PrecomputedFlowSource : public FlowSource {
public:
    explicit PrecomputedFlowSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
    FlowField flow(const Image&, const Image&, int from_index, int to_index) override {
        char name[48];
        std::snprintf(name, sizeof(name), "flow_%06d_%06d.f32", from_index, to_index);
        return read_flow_raster(dir_ / name);
    }
    std::string provenance() const override { return "precomputed:" + dir_.string(); }

private:
    std::filesystem::path dir_;
};

}  // namespace bvi
