#pragma once

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bvi/image.hpp"

// Minimal PNG codec over zlib: 8/16-bit grayscale, RGB and RGBA (alpha is
// dropped on load), no interlacing. Enough for the frame formats this
// toolkit reads and writes.

namespace bvi {
namespace detail {

inline void put_u32(std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

inline uint32_t get_u32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void write_chunk(std::vector<unsigned char>& out, const char type[4],
                        const unsigned char* data, size_t n) {
    put_u32(out, static_cast<uint32_t>(n));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (n) out.insert(out.end(), data, data + n);
    uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(4 + n)));
    put_u32(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline void write_png(const std::string& path, const Image& img, int bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) throw invalid_input("write_png: bit depth must be 8 or 16");
    if (img.channels != 1 && img.channels != 3)
        throw invalid_input("write_png: only 1- or 3-channel images");
    const int bpp = img.channels * bit_depth / 8;
    const size_t stride = static_cast<size_t>(img.w) * bpp;
    std::vector<unsigned char> raw;
    raw.reserve((stride + 1) * img.h);
    const double peak = bit_depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double v = std::min(1.0, std::max(0.0, img.at(y, x, c)));
                auto q = static_cast<uint32_t>(std::lround(v * peak));
                if (bit_depth == 8) {
                    raw.push_back(static_cast<unsigned char>(q));
                } else {
                    raw.push_back(static_cast<unsigned char>(q >> 8));
                    raw.push_back(static_cast<unsigned char>(q & 0xff));
                }
            }
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> z(bound);
    if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw invalid_input("write_png: deflate failed");
    z.resize(bound);

    std::vector<unsigned char> out;
    static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(img.w >> 24);
    ihdr[1] = static_cast<unsigned char>(img.w >> 16);
    ihdr[2] = static_cast<unsigned char>(img.w >> 8);
    ihdr[3] = static_cast<unsigned char>(img.w);
    ihdr[4] = static_cast<unsigned char>(img.h >> 24);
    ihdr[5] = static_cast<unsigned char>(img.h >> 16);
    ihdr[6] = static_cast<unsigned char>(img.h >> 8);
    ihdr[7] = static_cast<unsigned char>(img.h);
    ihdr[8] = static_cast<unsigned char>(bit_depth);
    ihdr[9] = img.channels == 1 ? 0 : 2;  // gray / truecolor
    ihdr[10] = 0;
    ihdr[11] = 0;
    ihdr[12] = 0;
    detail::write_chunk(out, "IHDR", ihdr, 13);
    detail::write_chunk(out, "IDAT", z.data(), z.size());
    detail::write_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw invalid_input("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw invalid_input("write_png: write failed for " + path);
}

inline Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw invalid_input("read_png: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw invalid_input("read_png: not a PNG file: " + path);

    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= buf.size() && !saw_iend) {
        uint32_t len = detail::get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw invalid_input("read_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const unsigned char* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(detail::get_u32(data));
            h = static_cast<int>(detail::get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw invalid_input("read_png: interlaced PNG unsupported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || w <= 0 || h <= 0) throw invalid_input("read_png: missing IHDR");
    if (bit_depth != 8 && bit_depth != 16)
        throw invalid_input("read_png: only 8/16-bit PNGs supported");
    int src_channels;
    switch (color_type) {
        case 0: src_channels = 1; break;
        case 2: src_channels = 3; break;
        case 6: src_channels = 4; break;
        default: throw invalid_input("read_png: unsupported color type");
    }

    const int bpp = src_channels * bit_depth / 8;
    const size_t stride = static_cast<size_t>(w) * bpp;
    std::vector<unsigned char> raw((stride + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    int zr = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zr != Z_OK || raw_len != raw.size()) throw invalid_input("read_png: inflate failed");

    // undo per-row filters in place
    std::vector<unsigned char> prev(stride, 0);
    for (int y = 0; y < h; ++y) {
        unsigned char* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        int filter = row[0];
        unsigned char* cur = row + 1;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
            int b = prev[i];
            int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
            int x = cur[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += detail::paeth(a, b, c); break;
                default: throw invalid_input("read_png: bad filter byte");
            }
            cur[i] = static_cast<unsigned char>(x);
        }
        std::memcpy(prev.data(), cur, stride);
    }

    const int out_channels = src_channels == 1 ? 1 : 3;
    Image img(h, w, out_channels);
    const double peak = bit_depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < h; ++y) {
        const unsigned char* cur = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < out_channels; ++c) {
                size_t i = (static_cast<size_t>(x) * src_channels + c) * bit_depth / 8;
                uint32_t q = bit_depth == 8 ? cur[i] : (uint32_t(cur[i]) << 8) | cur[i + 1];
                img.at(y, x, c) = q / peak;
            }
        }
    }
    return img;
}

inline std::string frame_filename(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.png", index);
    return buf;
}

}  // namespace bvi
