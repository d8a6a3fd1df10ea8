#pragma once

#include <algorithm>
#include <filesystem>

#include "bvi/degrade.hpp"
#include "bvi/manifest.hpp"
#include "bvi/png_io.hpp"

namespace bvi {

// On-disk layout: <clip>/blurry/ and <clip>/gt/ with zero-padded PNGs and a
// manifest.json each, plus a clip-level manifest recording the degradation
// parameters and provenance.

inline void write_frame_dir(const std::filesystem::path& dir, const FrameSequence& seq,
                            const std::string& role, const DegradationSpec* spec, uint64_t seed,
                            const std::string& source, const std::string& config_hash,
                            int bit_depth = 8) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < seq.count(); ++i)
        write_png((dir / frame_filename(i)).string(), seq.frames[static_cast<size_t>(i)],
                  bit_depth);
    Manifest m;
    m.role = role;
    m.fps = seq.fps;
    m.frame_count = seq.count();
    m.height = seq.frames.empty() ? 0 : seq.frames[0].h;
    m.width = seq.frames.empty() ? 0 : seq.frames[0].w;
    if (spec) {
        m.degradation_K = spec->K;
        m.degradation_tau = spec->tau;
    }
    m.seed = seed;
    m.source = source;
    m.config_hash = config_hash;
    m.save(dir);
}

inline std::pair<FrameSequence, Manifest> load_frame_dir(const std::filesystem::path& dir) {
    Manifest m = Manifest::load(dir);
    m.validate_against_dir(dir);
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    FrameSequence seq;
    seq.fps = m.fps;
    for (const auto& f : files) {
        Image img = read_png(f.string());
        if (img.h != m.height || img.w != m.width)
            throw invalid_input("load_frame_dir: frame size differs from manifest in " +
                                dir.string());
        if (img.channels == 1) {
            Image rgb(img.h, img.w, 3);
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x)
                    for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
            img = std::move(rgb);
        }
        seq.frames.push_back(std::move(img));
    }
    return {std::move(seq), std::move(m)};
}

inline void write_clip(const std::filesystem::path& clip_dir, const TrainingSample& sample,
                       uint64_t seed, const std::string& source, const std::string& config_hash,
                       int bit_depth = 8) {
    std::filesystem::create_directories(clip_dir);
    write_frame_dir(clip_dir / "blurry", sample.blurry, "blurry", &sample.spec, seed, source,
                    config_hash, bit_depth);
    write_frame_dir(clip_dir / "gt", sample.ground_truth, "gt", &sample.spec, seed, source,
                    config_hash, bit_depth);
    Manifest m;
    m.role = "clip";
    m.fps = sample.blurry.fps;
    m.frame_count = sample.blurry.count();
    m.height = sample.blurry.frames.empty() ? 0 : sample.blurry.frames[0].h;
    m.width = sample.blurry.frames.empty() ? 0 : sample.blurry.frames[0].w;
    m.degradation_K = sample.spec.K;
    m.degradation_tau = sample.spec.tau;
    m.seed = seed;
    m.source = source;
    m.config_hash = config_hash;
    std::ofstream f(clip_dir / "manifest.json");
    f << m.to_json().dump(2) << "\n";
}

inline TrainingSample load_clip(const std::filesystem::path& clip_dir) {
    auto [blurry, bm] = load_frame_dir(clip_dir / "blurry");
    auto [gt, gm] = load_frame_dir(clip_dir / "gt");
    if (std::abs(gm.fps - 2.0 * bm.fps) > 1e-9 * std::max(1.0, bm.fps))
        throw invalid_input("load_clip: gt fps must be twice blurry fps in " + clip_dir.string());
    if (gt.count() != 2 * blurry.count() - 1)
        throw invalid_input("load_clip: gt frame count must be 2N-1 in " + clip_dir.string());
    TrainingSample s;
    s.blurry = std::move(blurry);
    s.ground_truth = std::move(gt);
    if (bm.degradation_K) s.spec.K = *bm.degradation_K;
    if (bm.degradation_tau) s.spec.tau = *bm.degradation_tau;
    return s;
}

inline std::vector<TrainingSample> load_dataset(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> clips;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_directory() && std::filesystem::exists(e.path() / "blurry"))
            clips.push_back(e.path());
    std::sort(clips.begin(), clips.end());
    if (clips.empty()) throw invalid_input("load_dataset: no clips under " + dir.string());
    std::vector<TrainingSample> out;
    for (const auto& c : clips) out.push_back(load_clip(c));
    return out;
}

}  // namespace bvi
