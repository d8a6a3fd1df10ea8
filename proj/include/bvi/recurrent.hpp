#pragma once

#include "bvi/image.hpp"
#include "bvi/pyramid.hpp"

namespace bvi {

// Carries ConvLSTM state and progress across sliding windows.
struct StreamState {
    std::map<int, ConvLSTMState> states;  // level -> hidden/cell
    int emitted_up_to = 0;                // last emitted global output index
    int window_cursor = 0;                // next window start (input position)
    int padded_h = 0, padded_w = 0;
};

inline StreamState init_state(const PyramidModel& model, int frame_h, int frame_w) {
    const int r = model.cfg.shuffle_factor;
    StreamState st;
    st.padded_h = (frame_h + r - 1) / r * r;
    st.padded_w = (frame_w + r - 1) / r * r;
    st.states = zero_states(model, st.padded_h, st.padded_w);
    return st;
}

// Local output indices window w emits, for W windows at scale l. Steady-state
// windows emit the pair just left of center {l-1, l}; the first window also
// flushes its leading indices and the last its trailing ones, so every global
// index 1..2N-1 is emitted exactly once, by the latest window that covers it.
inline std::pair<int, int> emission_range(int w, int window_count, int scale) {
    int lo = (w == 0) ? 1 : scale - 1;
    int hi = (w == window_count - 1) ? 2 * scale - 1 : scale;
    return {lo, hi};
}

inline FrameSequence stream_process(const FrameSequence& blurry, PyramidModel& model,
                                    StreamState& state, bool clamp_outputs = true) {
    const int l = model.cfg.scale;
    const int n_in = blurry.count();
    if (n_in < l + 1)
        throw invalid_input("stream_process: need at least scale+1 frames, got " +
                            std::to_string(n_in));
    const Image& f0 = blurry.frames.front();
    if (state.padded_h == 0) state = init_state(model, f0.h, f0.w);

    const int pad_b = state.padded_h - f0.h;
    const int pad_r = state.padded_w - f0.w;
    std::vector<Tensor> padded;
    padded.reserve(static_cast<size_t>(n_in));
    for (const Image& f : blurry.frames)
        padded.push_back(tensor_from_image(reflect_pad(f, pad_b, pad_r)));

    const int window_count = n_in - l;
    FrameSequence out;
    out.fps = 2.0 * blurry.fps;
    out.origin_index = blurry.origin_index;
    out.frames.resize(static_cast<size_t>(2 * (n_in - 1) - 1));

    for (int w = 0; w < window_count; ++w) {
        std::vector<Tensor> window(padded.begin() + w, padded.begin() + w + l + 1);
        WindowResult res = run_window(model, window, state.states);
        auto [lo, hi] = emission_range(w, window_count, l);
        for (int local = lo; local <= hi; ++local) {
            int global = 2 * w + local;
            Image img = image_from_tensor(res.finals.at(local), clamp_outputs);
            if (pad_b || pad_r) img = crop(img, 0, 0, f0.h, f0.w);
            out.frames[static_cast<size_t>(global - 1)] = std::move(img);
            state.emitted_up_to = global;
        }
        state.states = std::move(res.new_states);
        state.window_cursor = w + 1;
    }
    return out;
}

}  // namespace bvi
