#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bvi/common.hpp"
#include "bvi/image.hpp"

namespace bvi {

// Discrete camera degradation model: one captured frame is the mean of the
// 2*tau+1 latent frames centered on a sampling instant; sampling instants are
// K latent frames apart.
struct DegradationSpec {
    int K = 8;    // latent frames per blurry-frame period; even so ground-truth midpoints land on latent indices
    int tau = 5;  // half exposure window

    void validate() const {
        if (K < 2 || K % 2 != 0) throw invalid_input("DegradationSpec: K must be even and >= 2");
        if (tau < 0) throw invalid_input("DegradationSpec: tau must be non-negative");
    }
};

// Paired clip: blurry inputs at even output indices 0,2,...,2N and sharp
// ground truth at every output index 0..2N (odd = interpolation targets,
// even = deblurring targets co-timed with the blurry frames).
struct TrainingSample {
    FrameSequence blurry;
    FrameSequence ground_truth;
    DegradationSpec spec;
};

inline Image synthesize_blurry_frame(const std::vector<Image>& latents, int center,
                                     const DegradationSpec& spec) {
    spec.validate();
    if (latents.empty()) throw invalid_input("synthesize_blurry_frame: no latents");
    if (center - spec.tau < 0 || center + spec.tau >= static_cast<int>(latents.size()))
        throw invalid_input("synthesize_blurry_frame: exposure window out of bounds");
    Image acc(latents[0].h, latents[0].w, latents[0].channels);
    for (int j = center - spec.tau; j <= center + spec.tau; ++j) {
        if (!latents[static_cast<size_t>(j)].same_shape(acc))
            throw invalid_input("synthesize_blurry_frame: latent shape mismatch");
        const auto& f = latents[static_cast<size_t>(j)].px;
        for (size_t i = 0; i < acc.px.size(); ++i) acc.px[i] += f[i];
    }
    const double inv = 1.0 / (2 * spec.tau + 1);
    for (double& v : acc.px) v *= inv;
    return acc;
}

struct ClipCounts {
    int first_center_i = 0;  // smallest i with a full window around i*K
    int blurry_count = 0;
    int gt_count = 0;  // 2*blurry_count - 1
};

inline ClipCounts clip_window_counts(int latent_count, const DegradationSpec& spec) {
    spec.validate();
    ClipCounts c;
    // valid i: i*K - tau >= 0  and  i*K + tau <= latent_count - 1
    c.first_center_i = (spec.tau + spec.K - 1) / spec.K;
    int last = (latent_count - 1 - spec.tau) / spec.K;
    c.blurry_count = std::max(0, last - c.first_center_i + 1);
    c.gt_count = c.blurry_count > 0 ? 2 * c.blurry_count - 1 : 0;
    return c;
}

inline TrainingSample build_clip(const FrameSequence& latents, const DegradationSpec& spec) {
    spec.validate();
    ClipCounts counts = clip_window_counts(latents.count(), spec);
    if (counts.blurry_count < 3)
        throw invalid_input("build_clip: latent sequence too short for 3 blur windows");

    TrainingSample s;
    s.spec = spec;
    s.blurry.fps = latents.fps / spec.K;
    s.blurry.origin_index = latents.origin_index + counts.first_center_i * spec.K;
    for (int i = 0; i < counts.blurry_count; ++i) {
        int center = (counts.first_center_i + i) * spec.K;
        s.blurry.frames.push_back(synthesize_blurry_frame(latents.frames, center, spec));
    }
    // ground truth at output indices n = 0..2N: latent index first_center*K + n*(K/2)
    s.ground_truth.fps = 2.0 * s.blurry.fps;
    s.ground_truth.origin_index = s.blurry.origin_index;
    for (int n = 0; n < counts.gt_count; ++n) {
        int li = counts.first_center_i * spec.K + n * (spec.K / 2);
        s.ground_truth.frames.push_back(latents.frames[static_cast<size_t>(li)]);
    }
    return s;
}

struct AugmentDraw {
    bool flip_horizontal = false;
    bool flip_vertical = false;
    bool reverse_time = false;
    int crop_y = 0;
    int crop_x = 0;
};

inline TrainingSample apply_augment(const TrainingSample& in, const AugmentDraw& d, int crop_h,
                                    int crop_w) {
    TrainingSample out;
    out.spec = in.spec;
    out.blurry.fps = in.blurry.fps;
    out.blurry.origin_index = in.blurry.origin_index;
    out.ground_truth.fps = in.ground_truth.fps;
    out.ground_truth.origin_index = in.ground_truth.origin_index;
    auto xform = [&](const Image& img) {
        Image r = crop(img, d.crop_y, d.crop_x, crop_h, crop_w);
        if (d.flip_horizontal) r = flip_h(r);
        if (d.flip_vertical) r = flip_v(r);
        return r;
    };
    for (const auto& f : in.blurry.frames) out.blurry.frames.push_back(xform(f));
    for (const auto& f : in.ground_truth.frames) out.ground_truth.frames.push_back(xform(f));
    if (d.reverse_time) {
        std::reverse(out.blurry.frames.begin(), out.blurry.frames.end());
        std::reverse(out.ground_truth.frames.begin(), out.ground_truth.frames.end());
    }
    return out;
}

// Same spatial transform on every frame of both streams; temporal reversal
// reverses both so the blurry/ground-truth pairing is preserved.
inline TrainingSample augment(const TrainingSample& sample, Rng& rng, int crop_h, int crop_w) {
    if (sample.blurry.frames.empty()) throw invalid_input("augment: empty sample");
    const Image& f0 = sample.blurry.frames.front();
    if (crop_h > f0.h || crop_w > f0.w || crop_h <= 0 || crop_w <= 0)
        throw invalid_input("augment: crop larger than frame");
    AugmentDraw d;
    d.flip_horizontal = rng.coin();
    d.flip_vertical = rng.coin();
    d.crop_y = rng.uniform_int(0, f0.h - crop_h);
    d.crop_x = rng.uniform_int(0, f0.w - crop_w);
    d.reverse_time = rng.coin();
    return apply_augment(sample, d, crop_h, crop_w);
}

// ---------------------------------------------------------------------------
// Toy latent scenes: anti-aliased shapes on a smooth background, moving with
// constant sub-pixel velocity. A desk-scale stand-in for high-fps footage.

struct ToySceneSpec {
    int width = 64;
    int height = 64;
    int frame_count = 97;
    double fps = 240.0;
    int min_shapes = 1;
    int max_shapes = 3;
    double min_speed = 0.0;  // pixels per latent frame
    double max_speed = 2.0;
    double min_radius = 5.0;
    double max_radius = 12.0;
    double background_level = 0.1;
    double background_wobble = 0.1;  // amplitude of the smooth gradient
};

namespace detail {

struct ToyShape {
    double x0 = 0, y0 = 0;  // center at frame 0
    double vx = 0, vy = 0;  // pixels per frame
    double radius = 5;
    bool rect = false;      // disc otherwise
    double color[3] = {1, 1, 1};
};

// Signed-distance coverage with a one-pixel soft edge, so sub-pixel motion
// produces smooth blur when frames are averaged.
inline double coverage(const ToyShape& s, double cx, double cy, double px, double py) {
    double d;
    if (s.rect) {
        double dx = std::abs(px - cx) - s.radius;
        double dy = std::abs(py - cy) - s.radius;
        d = std::max(dx, dy);
    } else {
        d = std::hypot(px - cx, py - cy) - s.radius;
    }
    return std::min(1.0, std::max(0.0, 0.5 - d));
}

}  // namespace detail

inline FrameSequence generate_toy_latents(const ToySceneSpec& spec, Rng& rng) {
    if (spec.frame_count <= 0) throw invalid_input("generate_toy_latents: zero frames requested");
    if (spec.width <= 0 || spec.height <= 0)
        throw invalid_input("generate_toy_latents: bad resolution");

    // background: fixed smooth gradient per clip
    double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0), gphase = rng.uniform(0.0, 6.28);
    Image bg(spec.height, spec.width, 3);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            double t = std::sin(gphase + 3.0 * (gx * x / spec.width + gy * y / spec.height));
            double v = spec.background_level + spec.background_wobble * 0.5 * (t + 1.0);
            for (int c = 0; c < 3; ++c) bg.at(y, x, c) = std::min(1.0, std::max(0.0, v));
        }

    int n_shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
    std::vector<detail::ToyShape> shapes(static_cast<size_t>(std::max(0, n_shapes)));
    for (auto& s : shapes) {
        s.radius = rng.uniform(spec.min_radius, spec.max_radius);
        s.x0 = rng.uniform(s.radius, spec.width - s.radius);
        s.y0 = rng.uniform(s.radius, spec.height - s.radius);
        double speed = rng.uniform(spec.min_speed, spec.max_speed);
        double ang = rng.uniform(0.0, 6.283185307179586);
        s.vx = speed * std::cos(ang);
        s.vy = speed * std::sin(ang);
        s.rect = rng.coin();
        for (double& c : s.color) c = rng.uniform(0.45, 1.0);
    }

    FrameSequence seq;
    seq.fps = spec.fps;
    seq.origin_index = 0;
    seq.frames.reserve(static_cast<size_t>(spec.frame_count));
    for (int t = 0; t < spec.frame_count; ++t) {
        Image f = bg;
        for (const auto& s : shapes) {
            double cx = s.x0 + s.vx * t;
            double cy = s.y0 + s.vy * t;
            // bounce off frame edges to keep shapes visible in long clips
            double px_span = spec.width - 2 * s.radius, py_span = spec.height - 2 * s.radius;
            if (px_span > 0) {
                double u = std::fmod(std::abs(cx - s.radius), 2 * px_span);
                cx = s.radius + (u <= px_span ? u : 2 * px_span - u);
            }
            if (py_span > 0) {
                double u = std::fmod(std::abs(cy - s.radius), 2 * py_span);
                cy = s.radius + (u <= py_span ? u : 2 * py_span - u);
            }
            int yl = std::max(0, static_cast<int>(std::floor(cy - s.radius - 2)));
            int yh = std::min(spec.height - 1, static_cast<int>(std::ceil(cy + s.radius + 2)));
            int xl = std::max(0, static_cast<int>(std::floor(cx - s.radius - 2)));
            int xh = std::min(spec.width - 1, static_cast<int>(std::ceil(cx + s.radius + 2)));
            for (int y = yl; y <= yh; ++y)
                for (int x = xl; x <= xh; ++x) {
                    double a = detail::coverage(s, cx, cy, x, y);
                    if (a <= 0) continue;
                    for (int c = 0; c < 3; ++c)
                        f.at(y, x, c) = (1 - a) * f.at(y, x, c) + a * s.color[c];
                }
        }
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

}  // namespace bvi
