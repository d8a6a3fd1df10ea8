#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "bvi/common.hpp"

namespace bvi {

// Planar-agnostic interleaved image: (y*w + x)*channels + c, values in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    int channels = 3;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w, int channels = 3, double fill = 0.0)
        : h(h), w(w), channels(channels), px(static_cast<size_t>(h) * w * channels, fill) {}

    size_t size() const { return px.size(); }

    double& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * channels + c]; }
    double at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * channels + c]; }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w && channels == o.channels; }

    void clamp01() {
        for (double& v : px) v = std::min(1.0, std::max(0.0, v));
    }
};

// Ordered list of same-shape frames plus frame-rate metadata. origin_index is
// the offset of frame 0 on the latent timeline the sequence was derived from.
struct FrameSequence {
    std::vector<Image> frames;
    double fps = 0.0;
    long origin_index = 0;

    int count() const { return static_cast<int>(frames.size()); }

    void validate() const {
        if (fps <= 0.0) throw invalid_input("FrameSequence: fps must be positive");
        if (frames.empty()) return;
        const Image& f0 = frames.front();
        for (const Image& f : frames) {
            if (!f.same_shape(f0))
                throw invalid_input("FrameSequence: frames differ in shape");
            for (double v : f.px)
                if (!(v >= 0.0 && v <= 1.0))
                    throw invalid_input("FrameSequence: pixel outside [0,1]");
        }
    }
};

inline Image flip_h(const Image& in) {
    Image out(in.h, in.w, in.channels);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int c = 0; c < in.channels; ++c)
                out.at(y, x, c) = in.at(y, in.w - 1 - x, c);
    return out;
}

inline Image flip_v(const Image& in) {
    Image out(in.h, in.w, in.channels);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            for (int c = 0; c < in.channels; ++c)
                out.at(y, x, c) = in.at(in.h - 1 - y, x, c);
    return out;
}

inline Image crop(const Image& in, int y0, int x0, int ch, int cw) {
    if (y0 < 0 || x0 < 0 || ch <= 0 || cw <= 0 || y0 + ch > in.h || x0 + cw > in.w)
        throw invalid_input("crop: window outside image");
    Image out(ch, cw, in.channels);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < in.channels; ++c)
                out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
    return out;
}

inline Image resize_bilinear(const Image& in, int oh, int ow) {
    if (oh <= 0 || ow <= 0) throw invalid_input("resize: non-positive target");
    Image out(oh, ow, in.channels);
    const double sy = static_cast<double>(in.h) / oh;
    const double sx = static_cast<double>(in.w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(in.h - 1, std::max(0, y0 + 1));
        y0 = std::min(in.h - 1, std::max(0, y0));
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(in.w - 1, std::max(0, x0 + 1));
            x0 = std::min(in.w - 1, std::max(0, x0));
            for (int c = 0; c < in.channels; ++c) {
                double top = (1 - wx) * in.at(y0, x0, c) + wx * in.at(y0, x1, c);
                double bot = (1 - wx) * in.at(y1, x0, c) + wx * in.at(y1, x1, c);
                out.at(y, x, c) = (1 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

// ITU-R BT.601 luma.
inline Image to_gray(const Image& in) {
    if (in.channels == 1) return in;
    Image out(in.h, in.w, 1);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x)
            out.at(y, x, 0) =
                0.299 * in.at(y, x, 0) + 0.587 * in.at(y, x, 1) + 0.114 * in.at(y, x, 2);
    return out;
}

// Mirror rows/columns (without repeating the edge sample) on bottom/right.
inline Image reflect_pad(const Image& in, int pad_bottom, int pad_right) {
    if (pad_bottom == 0 && pad_right == 0) return in;
    if (pad_bottom >= in.h || pad_right >= in.w)
        throw invalid_input("reflect_pad: pad exceeds image size");
    Image out(in.h + pad_bottom, in.w + pad_right, in.channels);
    for (int y = 0; y < out.h; ++y) {
        int sy = y < in.h ? y : 2 * in.h - 2 - y;
        for (int x = 0; x < out.w; ++x) {
            int sx = x < in.w ? x : 2 * in.w - 2 - x;
            for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(sy, sx, c);
        }
    }
    return out;
}

// Intensity-weighted centroid (x, y) of luma above a floor level.
inline std::array<double, 2> intensity_centroid(const Image& in, double floor_level = 0.0) {
    Image g = to_gray(in);
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double v = g.at(y, x, 0) - floor_level;
            if (v <= 0) continue;
            sw += v;
            sx += v * x;
            sy += v * y;
        }
    if (sw <= 0) return {0.0, 0.0};
    return {sx / sw, sy / sw};
}

}  // namespace bvi
