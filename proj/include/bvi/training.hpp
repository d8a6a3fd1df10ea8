#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "bvi/checkpoint.hpp"
#include "bvi/degrade.hpp"
#include "bvi/loss.hpp"
#include "bvi/recurrent.hpp"

namespace bvi {

struct TrainConfig {
    PyramidConfig arch;
    bool cycle_loss = true;
    double epsilon = 1e-3;
    double lr_initial = 1e-3;
    double lr_decay_factor = 0.2;
    int epochs_main = 40;
    int epochs_finetune = 5;
    int batch_size = 2;
    int unroll_T = 2;
    int crop_h = 0, crop_w = 0;  // 0 = use full frames
    bool augment = true;
    // Entry states for each unroll are constants; warm-starting computes them
    // by streaming the clip head gradient-free so the state distribution seen
    // in training matches inference. Zeros otherwise.
    bool warm_start_states = true;
    bool grad_clip = false;
    double grad_clip_value = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    uint64_t seed = 0;
    int checkpoint_every_epochs = 1;

    void validate() const {
        arch.validate();
        if (epsilon <= 0) throw config_error("TrainConfig: epsilon must be positive");
        if (unroll_T < 1) throw config_error("TrainConfig: unroll_T must be >= 1");
        if (!(lr_decay_factor > 0 && lr_decay_factor < 1))
            throw config_error("TrainConfig: lr_decay_factor must be in (0,1)");
        if (batch_size < 1) throw config_error("TrainConfig: batch_size must be >= 1");
        if (epochs_main < 0 || epochs_finetune < 0)
            throw config_error("TrainConfig: negative epoch count");
        if ((crop_h == 0) != (crop_w == 0)) throw config_error("TrainConfig: partial crop spec");
    }

    nlohmann::json to_json() const {
        return {{"arch", arch.to_json()},
                {"cycle_loss", cycle_loss},
                {"epsilon", epsilon},
                {"lr_initial", lr_initial},
                {"lr_decay_factor", lr_decay_factor},
                {"epochs_main", epochs_main},
                {"epochs_finetune", epochs_finetune},
                {"batch_size", batch_size},
                {"unroll_T", unroll_T},
                {"crop_h", crop_h},
                {"crop_w", crop_w},
                {"augment", augment},
                {"warm_start_states", warm_start_states},
                {"grad_clip", grad_clip},
                {"grad_clip_value", grad_clip_value},
                {"beta1", beta1},
                {"beta2", beta2},
                {"seed", seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.arch = PyramidConfig::from_json(j.at("arch"));
        c.cycle_loss = j.at("cycle_loss").get<bool>();
        c.epsilon = j.at("epsilon").get<double>();
        c.lr_initial = j.at("lr_initial").get<double>();
        c.lr_decay_factor = j.at("lr_decay_factor").get<double>();
        c.epochs_main = j.at("epochs_main").get<int>();
        c.epochs_finetune = j.at("epochs_finetune").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.unroll_T = j.at("unroll_T").get<int>();
        c.crop_h = j.at("crop_h").get<int>();
        c.crop_w = j.at("crop_w").get<int>();
        c.augment = j.at("augment").get<bool>();
        c.warm_start_states = j.value("warm_start_states", true);
        c.grad_clip = j.at("grad_clip").get<bool>();
        c.grad_clip_value = j.at("grad_clip_value").get<double>();
        c.beta1 = j.at("beta1").get<double>();
        c.beta2 = j.at("beta2").get<double>();
        c.seed = j.at("seed").get<uint64_t>();
        return c;
    }
};

struct UnrollLossNodes {
    int pixel = -1;
    int cycle = -1;
    int total = -1;
    // finals per window (output index -> node), for tests and diagnostics
    std::vector<std::map<int, int>> window_finals;
};

// Unrolls the model over T consecutive windows starting at blurry position
// `start`, on one tape. States entering the first window are constants:
// zeros by default, or `entry_states` when the caller warmed them up.
// Gradients flow through the carried states of later windows only.
inline UnrollLossNodes build_unroll_loss(Graph& g, PyramidModel& model,
                                         const TrainingSample& sample, int start, int T,
                                         const LossConfig& loss,
                                         const std::map<int, ConvLSTMState>* entry_states = nullptr) {
    loss.validate();
    const int l = model.cfg.scale;
    const int B = sample.blurry.count();
    if (start < 0 || start + T - 1 + l >= B)
        throw invalid_input("build_unroll_loss: unroll exceeds clip length");
    if (sample.ground_truth.count() != 2 * B - 1)
        throw invalid_input("build_unroll_loss: ground truth count mismatch");

    const Image& f0 = sample.blurry.frames.front();
    std::map<int, ConvLSTMNodes> states;
    if (entry_states) {
        for (const auto& [level, s] : *entry_states)
            states[level] = {g.leaf(s.hidden), g.leaf(s.cell)};
    } else {
        for (auto& [level, s] : zero_states(model, f0.h, f0.w))
            states[level] = {g.leaf(s.hidden), g.leaf(s.cell)};
    }

    UnrollLossNodes out;
    std::vector<std::vector<std::pair<int, int>>> pixel_pairs(static_cast<size_t>(T));
    std::vector<std::vector<std::pair<int, int>>> cycle_pairs_nodes(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        std::vector<int> window;
        for (int j = 0; j <= l; ++j)
            window.push_back(
                g.leaf(tensor_from_image(sample.blurry.frames[static_cast<size_t>(start + t + j)])));
        PyramidNodeOutputs res = pyramid_forward(g, model, window, states);
        for (const auto& [n, node] : res.finals) {
            int gt_index = 2 * (start + t) + n;
            int gt = g.leaf(
                tensor_from_image(sample.ground_truth.frames[static_cast<size_t>(gt_index)]));
            pixel_pairs[static_cast<size_t>(t)].emplace_back(node, gt);
        }
        for (const auto& [idx, temp_node] : res.temporaries)
            cycle_pairs_nodes[static_cast<size_t>(t)].emplace_back(temp_node, res.finals.at(idx));
        out.window_finals.push_back(res.finals);
        states = res.new_states;
    }

    out.pixel = pixel_loss_node(g, pixel_pairs, loss.epsilon);
    if (loss.cycle_enabled) {
        out.cycle = cycle_loss_node(g, cycle_pairs_nodes, loss.epsilon);
        out.total = g.add(out.pixel, out.cycle);
    } else {
        out.cycle = g.leaf(Tensor(1, 1, 1));
        out.total = out.pixel;
    }
    return out;
}

// Streams the clip head gradient-free to produce the entry states for an
// unroll starting at `start`.
inline std::map<int, ConvLSTMState> warmup_states(PyramidModel& model,
                                                  const TrainingSample& sample, int start) {
    const Image& f0 = sample.blurry.frames.front();
    std::map<int, ConvLSTMState> st = zero_states(model, f0.h, f0.w);
    if (!model.cfg.recurrence) return st;
    const int l = model.cfg.scale;
    for (int w = 0; w < start; ++w) {
        std::vector<Tensor> window;
        for (int j = 0; j <= l; ++j)
            window.push_back(
                tensor_from_image(sample.blurry.frames[static_cast<size_t>(w + j)]));
        WindowResult res = run_window(model, window, st);
        st = std::move(res.new_states);
    }
    return st;
}

struct TrainResult {
    long steps = 0;
    double initial_pixel = 0.0;
    double final_pixel = 0.0;
    double final_total = 0.0;
    std::filesystem::path checkpoint_path;
};

// Full training loop with LR schedule, CSV logging, epoch checkpoints and
// resume. Deterministic given (config, dataset): every random draw comes from
// one seeded stream consumed in a fixed order.
inline TrainResult train(const TrainConfig& cfg, const std::vector<TrainingSample>& dataset,
                         const std::filesystem::path& out_dir,
                         const std::string& resume_path = "",
                         const std::string& config_hash = "") {
    cfg.validate();
    if (dataset.empty()) throw invalid_input("train: empty dataset");
    const int l = cfg.arch.scale;
    for (const auto& s : dataset) {
        if (s.blurry.count() < l + cfg.unroll_T)
            throw invalid_input("train: clip too short for scale+T windows");
        if (s.ground_truth.count() != 2 * s.blurry.count() - 1)
            throw invalid_input("train: ground-truth frame count mismatch");
    }

    std::filesystem::create_directories(out_dir);
    PyramidModel model;
    AdaMaxOptimizer opt;
    Rng rng(cfg.seed);
    long step = 0;
    int start_epoch = 0;
    AdaMaxConfig ocfg;
    ocfg.beta1 = cfg.beta1;
    ocfg.beta2 = cfg.beta2;

    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        model = std::move(ck.model);
        opt = AdaMaxOptimizer(model.all_params(), ocfg);
        if (ck.has_optimizer) {
            opt.slots_w() = std::move(ck.slots_w);
            opt.slots_b() = std::move(ck.slots_b);
            opt.set_step_count(ck.adamax_t);
        }
        step = ck.step;
        start_epoch = ck.epoch + 1;
        if (!ck.rng_state.empty()) rng.load_state(ck.rng_state);
    } else {
        model = PyramidModel::create(cfg.arch, cfg.seed);
        opt = AdaMaxOptimizer(model.all_params(), ocfg);
    }

    LossConfig loss{cfg.epsilon, cfg.cycle_loss};
    const int total_epochs = cfg.epochs_main + cfg.epochs_finetune;

    std::ofstream log(out_dir / "train_log.csv", start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (start_epoch == 0) log << "step,lr,pixel_loss,cycle_loss,total,wall_ms\n";

    TrainResult result;
    bool first_step = true;
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = start_epoch; epoch < total_epochs; ++epoch) {
        const double lr =
            epoch < cfg.epochs_main ? cfg.lr_initial : cfg.lr_initial * cfg.lr_decay_factor;
        // Fisher-Yates from the run rng
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

        for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
            auto t0 = std::chrono::steady_clock::now();
            size_t bend = std::min(order.size(), pos + static_cast<size_t>(cfg.batch_size));
            model.zero_grad();
            double pixel_sum = 0, cycle_sum = 0, total_sum = 0;
            std::vector<std::pair<size_t, int>> batch_ids;  // (clip, window start) for diagnostics
            for (size_t bi = pos; bi < bend; ++bi) {
                const TrainingSample* sample = &dataset[order[bi]];
                TrainingSample scratch;
                if (cfg.augment) {
                    int ch = cfg.crop_h > 0 ? cfg.crop_h : sample->blurry.frames[0].h;
                    int cw = cfg.crop_w > 0 ? cfg.crop_w : sample->blurry.frames[0].w;
                    scratch = augment(*sample, rng, ch, cw);
                    sample = &scratch;
                }
                int max_start = sample->blurry.count() - l - cfg.unroll_T;
                int start = rng.uniform_int(0, max_start);
                batch_ids.emplace_back(order[bi], start);

                std::map<int, ConvLSTMState> entry;
                const std::map<int, ConvLSTMState>* entry_ptr = nullptr;
                if (cfg.warm_start_states && cfg.arch.recurrence && start > 0) {
                    entry = warmup_states(model, *sample, start);
                    entry_ptr = &entry;
                }
                Graph g;
                UnrollLossNodes nodes =
                    build_unroll_loss(g, model, *sample, start, cfg.unroll_T, loss, entry_ptr);
                double total = g.scalar(nodes.total);
                if (!std::isfinite(total)) {
                    nlohmann::json dump{{"step", step},
                                        {"epoch", epoch},
                                        {"clip", order[bi]},
                                        {"window_start", start},
                                        {"pixel", g.scalar(nodes.pixel)},
                                        {"cycle", g.scalar(nodes.cycle)}};
                    std::ofstream d(out_dir / "nan_dump.json");
                    d << dump.dump(2) << "\n";
                    throw numeric_error("train: non-finite loss at step " + std::to_string(step) +
                                        " (details in nan_dump.json)");
                }
                pixel_sum += g.scalar(nodes.pixel);
                cycle_sum += g.scalar(nodes.cycle);
                total_sum += total;
                g.backward(nodes.total);
            }
            const double inv_batch = 1.0 / static_cast<double>(bend - pos);
            opt.step(lr, inv_batch, cfg.grad_clip ? cfg.grad_clip_value : 0.0);
            ++step;
            auto t1 = std::chrono::steady_clock::now();
            double wall_ms =
                std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
            log << step << ',' << lr << ',' << pixel_sum * inv_batch << ',' << cycle_sum * inv_batch
                << ',' << total_sum * inv_batch << ',' << wall_ms << '\n';
            if (first_step) {
                result.initial_pixel = pixel_sum * inv_batch;
                first_step = false;
            }
            result.final_pixel = pixel_sum * inv_batch;
            result.final_total = total_sum * inv_batch;
        }

        if ((epoch + 1) % cfg.checkpoint_every_epochs == 0 || epoch == total_epochs - 1) {
            char name[32];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%04d.bvick", epoch);
            save_checkpoint(out_dir / name, model, &opt, step, epoch, rng.save_state(),
                            cfg.to_json(), config_hash);
            std::filesystem::copy_file(out_dir / name, out_dir / "latest.bvick",
                                       std::filesystem::copy_options::overwrite_existing);
        }
    }
    result.steps = step;
    result.checkpoint_path = out_dir / "latest.bvick";
    log.flush();
    return result;
}

}  // namespace bvi
