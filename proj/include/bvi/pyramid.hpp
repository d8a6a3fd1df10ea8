#pragma once

#include <map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bvi/backbone.hpp"

namespace bvi {

// One backbone application inside a pyramid: level k consumes adjacent
// outputs of level k-1 (level 0 = the blurry inputs) and emits the frame at
// the midpoint index. An index that a later level re-synthesizes is a
// temporary ("primed") frame and gets cycle-paired with the final one.
struct Production {
    int level = 1;
    int out_index = 0;
    std::array<int, 2> in_indices{};    // level-(k-1) output indices
    bool has_skip = false;
    std::array<int, 2> skip_indices{};  // original input indices
    bool is_temporary = false;
};

struct RecurrentTap {
    int level = 2;       // level whose backbone receives the hidden state next window
    int tap_index = 0;   // rightmost output index of level-1 below, fed to the ConvLSTM
};

struct PyramidPlan {
    int scale = 2;
    bool recurrence = true;
    std::vector<int> input_indices;                 // 0,2,...,2*scale
    std::vector<Production> productions;            // topological order
    std::vector<int> temporaries;                   // indices produced more than once
    std::vector<std::pair<int, int>> cycle_pairs;   // (temporary index, final index)
    std::vector<RecurrentTap> taps;                 // one per level >= 2 when recurrence is on

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["scale"] = scale;
        j["recurrence"] = recurrence;
        j["input_indices"] = input_indices;
        nlohmann::json prods = nlohmann::json::array();
        for (const auto& p : productions) {
            nlohmann::json e{{"level", p.level},
                             {"out_index", p.out_index},
                             {"in_indices", p.in_indices},
                             {"temporary", p.is_temporary},
                             {"sharing_group", "level" + std::to_string(p.level)}};
            if (p.has_skip) e["skip_inputs"] = p.skip_indices;
            prods.push_back(e);
        }
        j["productions"] = prods;
        j["temporaries"] = temporaries;
        nlohmann::json cp = nlohmann::json::array();
        for (auto& [a, b] : cycle_pairs) cp.push_back({a, b});
        j["cycle_pairs"] = cp;
        nlohmann::json tp = nlohmann::json::array();
        for (const auto& t : taps)
            tp.push_back({{"level", t.level}, {"tap_index", t.tap_index}});
        j["recurrent_taps"] = tp;
        return j;
    }
};

inline PyramidPlan build_plan(int scale, bool recurrence = true) {
    if (scale < 2) throw config_error("build_plan: scale must be >= 2");
    PyramidPlan plan;
    plan.scale = scale;
    plan.recurrence = recurrence;
    for (int j = 0; j <= scale; ++j) plan.input_indices.push_back(2 * j);

    auto final_level = [scale](int index) { return std::min(index, 2 * scale - index); };

    for (int level = 1; level <= scale; ++level) {
        for (int m = level; m <= 2 * scale - level; m += 2) {
            Production p;
            p.level = level;
            p.out_index = m;
            p.in_indices = {m - 1, m + 1};
            if (level >= 3 && level % 2 == 1) {
                // pair inputs sit at even indices: co-indexed originals exist
                p.has_skip = true;
                p.skip_indices = {m - 1, m + 1};
            }
            p.is_temporary = level < final_level(m);
            plan.productions.push_back(p);
        }
    }
    for (int m = 1; m <= 2 * scale - 1; ++m)
        if (final_level(m) >= 3) plan.temporaries.push_back(m);
    for (const auto& p : plan.productions)
        if (p.is_temporary) plan.cycle_pairs.emplace_back(p.out_index, p.out_index);
    if (recurrence)
        for (int level = 2; level <= scale; ++level)
            plan.taps.push_back({level, 2 * scale - (level - 1)});
    return plan;
}

inline std::vector<std::pair<int, int>> cycle_pairs(const PyramidPlan& plan) {
    return plan.cycle_pairs;
}

// ---------------------------------------------------------------------------

struct PyramidConfig {
    int scale = 2;
    bool recurrence = true;
    int base_channels = 16;
    int rdb_growth = 8;
    int num_rdbs = 6;
    int shuffle_factor = 2;
    int hidden_channels = 4;

    static PyramidConfig toy(int scale, bool recurrence = true) {
        PyramidConfig c;
        c.scale = scale;
        c.recurrence = recurrence;
        return c;
    }

    static PyramidConfig paper(int scale, bool recurrence = true) {
        PyramidConfig c;
        c.scale = scale;
        c.recurrence = recurrence;
        c.base_channels = 64;
        c.rdb_growth = 32;
        c.hidden_channels = 16;
        return c;
    }

    void validate() const {
        if (scale < 2) throw config_error("PyramidConfig: scale must be >= 2");
        if (hidden_channels < 1 && recurrence)
            throw config_error("PyramidConfig: hidden_channels must be positive");
    }

    nlohmann::json to_json() const {
        return {{"scale", scale},
                {"recurrence", recurrence},
                {"base_channels", base_channels},
                {"rdb_growth", rdb_growth},
                {"num_rdbs", num_rdbs},
                {"shuffle_factor", shuffle_factor},
                {"hidden_channels", hidden_channels}};
    }

    static PyramidConfig from_json(const nlohmann::json& j) {
        PyramidConfig c;
        c.scale = j.at("scale").get<int>();
        c.recurrence = j.at("recurrence").get<bool>();
        c.base_channels = j.at("base_channels").get<int>();
        c.rdb_growth = j.at("rdb_growth").get<int>();
        c.num_rdbs = j.at("num_rdbs").get<int>();
        c.shuffle_factor = j.at("shuffle_factor").get<int>();
        c.hidden_channels = j.at("hidden_channels").get<int>();
        return c;
    }
};

struct PyramidModel {
    PyramidConfig cfg;
    PyramidPlan plan;
    std::vector<BackboneConfig> level_cfg;     // index level-1
    std::vector<ParameterSet> level_params;    // shared by all applications of that level
    ConvLSTMConfig lstm_cfg;
    std::vector<ParameterSet> lstm_params;     // index level-2, empty when recurrence is off

    static PyramidModel create(const PyramidConfig& cfg, uint64_t seed) {
        cfg.validate();
        PyramidModel m;
        m.cfg = cfg;
        m.plan = build_plan(cfg.scale, cfg.recurrence);
        Rng rng(seed);
        for (int level = 1; level <= cfg.scale; ++level) {
            BackboneConfig bc;
            bc.in_frames = 2;
            bc.skip_frames = (level >= 3 && level % 2 == 1) ? 2 : 0;
            bc.aux_channels = (cfg.recurrence && level >= 2) ? cfg.hidden_channels : 0;
            bc.base_channels = cfg.base_channels;
            bc.rdb_growth = cfg.rdb_growth;
            bc.num_rdbs = cfg.num_rdbs;
            bc.shuffle_factor = cfg.shuffle_factor;
            m.level_cfg.push_back(bc);
            m.level_params.push_back(
                make_backbone_params(bc, "level" + std::to_string(level), rng));
        }
        m.lstm_cfg.input_channels = 3 * cfg.shuffle_factor * cfg.shuffle_factor;
        m.lstm_cfg.hidden_channels = cfg.hidden_channels;
        if (cfg.recurrence)
            for (int level = 2; level <= cfg.scale; ++level)
                m.lstm_params.push_back(
                    make_convlstm_params(m.lstm_cfg, "lstm" + std::to_string(level), rng));
        return m;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& ps : level_params) n += ps.param_count();
        for (const auto& ps : lstm_params) n += ps.param_count();
        return n;
    }

    std::vector<ParameterSet*> all_params() {
        std::vector<ParameterSet*> out;
        for (auto& ps : level_params) out.push_back(&ps);
        for (auto& ps : lstm_params) out.push_back(&ps);
        return out;
    }

    void zero_grad() {
        for (auto* ps : all_params()) ps->zero_grad();
    }
};

struct PyramidNodeOutputs {
    std::map<int, int> finals;                      // output index -> node
    std::vector<std::pair<int, int>> temporaries;   // (output index, node)
    std::map<int, ConvLSTMNodes> new_states;        // level -> nodes
};

// Executes the plan on graph nodes. `states` maps level -> (hidden, cell)
// node ids; required for every tapped level when recurrence is on.
inline PyramidNodeOutputs pyramid_forward(Graph& g, PyramidModel& model,
                                          const std::vector<int>& window,
                                          const std::map<int, ConvLSTMNodes>& states) {
    const PyramidPlan& plan = model.plan;
    if (static_cast<int>(window.size()) != plan.scale + 1)
        throw invalid_input("pyramid_forward: window must have scale+1 frames");
    const Tensor& f0 = g.value(window[0]);
    for (int id : window)
        if (!g.value(id).same_shape(f0)) throw invalid_input("pyramid_forward: frame shape mismatch");

    // values[(level, index)] -> node
    std::map<std::pair<int, int>, int> values;
    for (size_t j = 0; j < window.size(); ++j) values[{0, plan.input_indices[j]}] = window[j];

    PyramidNodeOutputs out;
    for (const auto& p : plan.productions) {
        std::vector<int> frames{values.at({p.level - 1, p.in_indices[0]}),
                                values.at({p.level - 1, p.in_indices[1]})};
        std::vector<int> skips;
        if (p.has_skip)
            skips = {values.at({0, p.skip_indices[0]}), values.at({0, p.skip_indices[1]})};
        int aux = -1;
        const BackboneConfig& bc = model.level_cfg.at(static_cast<size_t>(p.level - 1));
        if (bc.aux_channels > 0) {
            auto it = states.find(p.level);
            if (it == states.end())
                throw config_error("pyramid_forward: missing state for tapped level " +
                                   std::to_string(p.level));
            aux = it->second.hidden;
        }
        int node = backbone_forward(g, bc, model.level_params.at(static_cast<size_t>(p.level - 1)),
                                    frames, skips, aux);
        values[{p.level, p.out_index}] = node;
        if (p.is_temporary)
            out.temporaries.emplace_back(p.out_index, node);
        else
            out.finals[p.out_index] = node;
    }

    for (const auto& tap : plan.taps) {
        auto it = states.find(tap.level);
        if (it == states.end())
            throw config_error("pyramid_forward: missing state for tapped level " +
                               std::to_string(tap.level));
        int tap_frame = values.at({tap.level - 1, tap.tap_index});
        int x = g.down_shuffle(tap_frame, model.cfg.shuffle_factor);
        out.new_states[tap.level] =
            convlstm_step(g, model.lstm_cfg,
                          model.lstm_params.at(static_cast<size_t>(tap.level - 2)), x,
                          it->second.hidden, it->second.cell);
    }
    return out;
}

// Zero-filled states at the downshuffled resolution of (frame_h, frame_w).
inline std::map<int, ConvLSTMState> zero_states(const PyramidModel& model, int frame_h,
                                                int frame_w) {
    std::map<int, ConvLSTMState> st;
    if (!model.cfg.recurrence) return st;
    const int r = model.cfg.shuffle_factor;
    if (frame_h % r != 0 || frame_w % r != 0)
        throw invalid_input("zero_states: dims not divisible by shuffle factor");
    for (const auto& tap : model.plan.taps) {
        ConvLSTMState s;
        s.hidden = Tensor(model.cfg.hidden_channels, frame_h / r, frame_w / r);
        s.cell = Tensor(model.cfg.hidden_channels, frame_h / r, frame_w / r);
        st[tap.level] = std::move(s);
    }
    return st;
}

struct WindowResult {
    std::map<int, Tensor> finals;
    std::vector<std::pair<int, Tensor>> temporaries;
    std::map<int, ConvLSTMState> new_states;
};

// Non-graph convenience wrapper for inference and tests: runs one window on a
// fresh tape and detaches the results.
inline WindowResult run_window(PyramidModel& model, const std::vector<Tensor>& window,
                               const std::map<int, ConvLSTMState>& states) {
    Graph g;
    std::vector<int> nodes;
    for (const Tensor& t : window) nodes.push_back(g.leaf(t));
    std::map<int, ConvLSTMNodes> state_nodes;
    for (const auto& [level, s] : states)
        state_nodes[level] = {g.leaf(s.hidden), g.leaf(s.cell)};
    PyramidNodeOutputs no = pyramid_forward(g, model, nodes, state_nodes);
    WindowResult r;
    for (const auto& [idx, node] : no.finals) r.finals[idx] = g.value(node);
    for (const auto& [idx, node] : no.temporaries) r.temporaries.emplace_back(idx, g.value(node));
    for (const auto& [level, n] : no.new_states)
        r.new_states[level] = {g.value(n.hidden), g.value(n.cell)};
    return r;
}

}  // namespace bvi
