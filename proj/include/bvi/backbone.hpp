#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bvi/autograd.hpp"

namespace bvi {

// Residual-dense backbone: DownShuffle -> two head convs -> num_rdbs residual
// dense blocks whose outputs are concatenated and fused -> UpShuffle -> two
// tail convs, plus a global input-average residual so the untrained network
// starts out as an averaging predictor.
struct BackboneConfig {
    int in_frames = 2;      // pair inputs
    int skip_frames = 0;    // co-indexed original inputs concatenated before DownShuffle
    int aux_channels = 0;   // hidden-state channels injected after DownShuffle
    int base_channels = 16;
    int rdb_growth = 8;
    int num_rdbs = 6;
    int shuffle_factor = 2;

    int shuffled_in_channels() const {
        return 3 * (in_frames + skip_frames) * shuffle_factor * shuffle_factor + aux_channels;
    }

    void validate() const {
        if (in_frames < 1) throw config_error("BackboneConfig: need at least one input frame");
        if (num_rdbs < 1 || shuffle_factor < 1 || base_channels < 1 || rdb_growth < 1)
            throw config_error("BackboneConfig: non-positive size field");
        if (aux_channels < 0 || skip_frames < 0) throw config_error("BackboneConfig: negative channels");
        if (base_channels % (shuffle_factor * shuffle_factor) != 0)
            throw config_error("BackboneConfig: base_channels must be divisible by shuffle_factor^2");
    }
};

namespace backbone_layout {
// conv indices inside the ParameterSet
inline constexpr int kHead1 = 0;
inline constexpr int kHead2 = 1;
inline constexpr int kRdbFirst = 2;      // 5 convs per block: 4 dense 3x3 + 1 fuse 1x1
inline constexpr int kConvsPerRdb = 5;
inline int gff1(const BackboneConfig& c) { return kRdbFirst + c.num_rdbs * kConvsPerRdb; }
inline int gff2(const BackboneConfig& c) { return gff1(c) + 1; }
inline int tail1(const BackboneConfig& c) { return gff1(c) + 2; }
inline int tail2(const BackboneConfig& c) { return gff1(c) + 3; }
}  // namespace backbone_layout

inline ParameterSet make_backbone_params(const BackboneConfig& cfg, const std::string& group_id,
                                         Rng& rng) {
    cfg.validate();
    ParameterSet ps;
    ps.group_id = group_id;
    const int r2 = cfg.shuffle_factor * cfg.shuffle_factor;
    const int base = cfg.base_channels, growth = cfg.rdb_growth;
    const int up_c = base / r2;

    auto add = [&](const std::string& nm, int oc, int ic, int k, double scale = 1.0,
                   double gain = 1.0) {
        ConvParam p;
        p.init_shape(group_id + "/" + nm, oc, ic, k);
        init_conv(p, rng, scale, gain);
        ps.convs.push_back(std::move(p));
    };
    const double relu_gain = std::sqrt(2.0);

    add("head1", base, cfg.shuffled_in_channels(), 3);
    if (cfg.aux_channels > 0) {
        // hidden-state columns start near zero so an untrained ConvLSTM
        // cannot disturb the frame path; the network learns to use state
        ConvParam& head1 = ps.convs.back();
        const int aux_lo = cfg.shuffled_in_channels() - cfg.aux_channels;
        for (int oc = 0; oc < head1.out_c; ++oc)
            for (int ic = aux_lo; ic < head1.in_c; ++ic)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) head1.wat(oc, ic, ky, kx) *= 0.01;
    }
    add("head2", base, base, 3);
    for (int i = 0; i < cfg.num_rdbs; ++i) {
        for (int j = 0; j < 4; ++j)
            add("rdb" + std::to_string(i) + "/dense" + std::to_string(j), growth,
                base + j * growth, 3, 1.0, relu_gain);
        add("rdb" + std::to_string(i) + "/fuse", base, base + 4 * growth, 1);
    }
    add("gff1", base, cfg.num_rdbs * base, 1);
    add("gff2", base, base, 3);
    add("tail1", up_c, up_c, 3);
    add("tail2", 3, up_c, 3, 0.01);  // near-zero: initial output ~= input average
    return ps;
}

// Four 3x3 conv+ReLU stages, each consuming the concatenation of the block
// input and all prior stage outputs; a 1x1 conv fuses back to C channels;
// local residual to the block input.
inline int residual_dense_block(Graph& g, ParameterSet& ps, int first_conv, int x) {
    int cat = x;
    for (int j = 0; j < 4; ++j) {
        int out = g.relu(g.conv(cat, ps.convs.at(static_cast<size_t>(first_conv + j))));
        cat = g.concat({cat, out});
    }
    int fused = g.conv(cat, ps.convs.at(static_cast<size_t>(first_conv + 4)));
    return g.add(fused, x);
}

// frames: pair inputs; skips: co-indexed original inputs (may be empty);
// aux: hidden-state node at the downshuffled resolution, or -1.
inline int backbone_forward(Graph& g, const BackboneConfig& cfg, ParameterSet& ps,
                            const std::vector<int>& frames, const std::vector<int>& skips,
                            int aux) {
    namespace bl = backbone_layout;
    cfg.validate();
    if (static_cast<int>(frames.size()) != cfg.in_frames)
        throw config_error("backbone_forward: frame count mismatch");
    if (static_cast<int>(skips.size()) != cfg.skip_frames)
        throw config_error("backbone_forward: skip count mismatch");
    // note: graph node references invalidate on push; keep shapes by value
    const int fh = g.value(frames[0]).h, fw = g.value(frames[0]).w;
    for (int id : frames) {
        const Tensor& t = g.value(id);
        if (t.c != 3 || t.h != fh || t.w != fw)
            throw invalid_input("backbone_forward: frame shape mismatch");
    }
    for (int id : skips) {
        const Tensor& t = g.value(id);
        if (t.c != 3 || t.h != fh || t.w != fw)
            throw invalid_input("backbone_forward: skip shape mismatch");
    }
    if (fh % cfg.shuffle_factor != 0 || fw % cfg.shuffle_factor != 0)
        throw invalid_input("backbone_forward: spatial dims not divisible by shuffle factor");

    std::vector<int> cat_in = frames;
    cat_in.insert(cat_in.end(), skips.begin(), skips.end());
    if (cfg.aux_channels > 0) {
        if (aux < 0) throw config_error("backbone_forward: missing hidden state for aux input");
        if (g.value(aux).c != cfg.aux_channels || g.value(aux).h != fh / cfg.shuffle_factor ||
            g.value(aux).w != fw / cfg.shuffle_factor)
            throw config_error("backbone_forward: hidden state shape mismatch");
    }
    int d = g.down_shuffle(cat_in.size() == 1 ? cat_in[0] : g.concat(cat_in), cfg.shuffle_factor);
    if (cfg.aux_channels > 0) d = g.concat({d, aux});

    int f_head1 = g.conv(d, ps.convs.at(bl::kHead1));
    int x = g.conv(f_head1, ps.convs.at(bl::kHead2));
    std::vector<int> rdb_outs;
    for (int i = 0; i < cfg.num_rdbs; ++i) {
        x = residual_dense_block(g, ps, bl::kRdbFirst + i * bl::kConvsPerRdb, x);
        rdb_outs.push_back(x);
    }
    int gff = g.conv(g.concat(rdb_outs), ps.convs.at(static_cast<size_t>(bl::gff1(cfg))));
    gff = g.conv(gff, ps.convs.at(static_cast<size_t>(bl::gff2(cfg))));
    gff = g.add(gff, f_head1);

    int up = g.up_shuffle(gff, cfg.shuffle_factor);
    up = g.conv(up, ps.convs.at(static_cast<size_t>(bl::tail1(cfg))));
    int out = g.conv(up, ps.convs.at(static_cast<size_t>(bl::tail2(cfg))));

    std::vector<double> coefs(frames.size(), 1.0 / static_cast<double>(frames.size()));
    int avg = g.linear_comb(frames, coefs);
    return g.add(out, avg);
}

// ---------------------------------------------------------------------------
// Convolutional LSTM cell.

struct ConvLSTMConfig {
    int input_channels = 12;
    int hidden_channels = 4;
    int kernel = 3;

    void validate() const {
        if (input_channels < 1 || hidden_channels < 1 || kernel < 1 || kernel % 2 == 0)
            throw config_error("ConvLSTMConfig: bad field");
    }
};

struct ConvLSTMState {
    Tensor hidden;
    Tensor cell;
};

inline ParameterSet make_convlstm_params(const ConvLSTMConfig& cfg, const std::string& group_id,
                                         Rng& rng) {
    cfg.validate();
    ParameterSet ps;
    ps.group_id = group_id;
    ConvParam p;
    // gate order along output channels: input, forget, candidate, output
    p.init_shape(group_id + "/gates", 4 * cfg.hidden_channels,
                 cfg.input_channels + cfg.hidden_channels, cfg.kernel);
    init_conv(p, rng);
    ps.convs.push_back(std::move(p));
    return ps;
}

struct ConvLSTMNodes {
    int hidden = -1;
    int cell = -1;
};

inline ConvLSTMNodes convlstm_step(Graph& g, const ConvLSTMConfig& cfg, ParameterSet& ps, int x,
                                   int h_prev, int c_prev) {
    const Tensor& xv = g.value(x);
    const Tensor& hv = g.value(h_prev);
    if (xv.c != cfg.input_channels || hv.c != cfg.hidden_channels || xv.h != hv.h || xv.w != hv.w ||
        !g.value(c_prev).same_shape(hv))
        throw config_error("convlstm_step: shape mismatch");
    const int H = cfg.hidden_channels;
    int gates = g.conv(g.concat({x, h_prev}), ps.convs.at(0));
    int gi = g.sigmoid(g.slice_channels(gates, 0, H));
    int gf = g.sigmoid(g.slice_channels(gates, H, 2 * H));
    int gc = g.tanh_(g.slice_channels(gates, 2 * H, 3 * H));
    int go = g.sigmoid(g.slice_channels(gates, 3 * H, 4 * H));
    ConvLSTMNodes out;
    out.cell = g.add(g.mul(gf, c_prev), g.mul(gi, gc));
    out.hidden = g.mul(go, g.tanh_(out.cell));
    return out;
}

}  // namespace bvi
