// bvi: joint video deblurring and frame-rate up-conversion toolkit.
// Subcommands: synth | train | infer | eval | plan.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "bvi/dataset.hpp"
#include "bvi/metrics.hpp"
#include "bvi/recurrent.hpp"
#include "bvi/training.hpp"

namespace fs = std::filesystem;
using namespace bvi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct SynthOpts {
    std::string out;
    std::string latents_dir;  // real latent frames; toy scenes otherwise
    int clips = 20;
    int frames = 97;
    int width = 64, height = 64;
    double fps = 240.0;
    int K = 8, tau = 5;
    uint64_t seed = 0;
    int shapes_min = 1, shapes_max = 3;
    double speed_min = 0.0, speed_max = 2.0;
    int bit_depth = 8;
    bool save_latents = false;
};

struct TrainOpts {
    std::string data;
    std::string out;
    std::string resume;
    int scale = 2;
    bool no_recurrence = false;
    bool no_cycle_loss = false;
    bool no_augment = false;
    bool no_warm_start = false;
    int epochs = 40;
    int finetune_epochs = 5;
    double lr = 1e-3;
    double lr_decay = 0.2;
    int batch = 2;
    int unroll = 2;
    uint64_t seed = 0;
    int base_channels = 16;
    int growth = 8;
    int num_rdbs = 6;
    int hidden = 4;
    int crop_h = 0, crop_w = 0;
    bool grad_clip = false;
    double grad_clip_value = 1.0;
    double epsilon = 1e-3;
};

struct InferOpts {
    std::string checkpoint;
    std::string input;
    std::string out;
    int bit_depth = 8;
};

struct EvalOpts {
    std::string pred;
    std::string gt;
    std::string out;
    std::string flow_pred_dir;  // precomputed rasters; estimator otherwise
    std::string flow_gt_dir;
    double flow_alpha = 0.02;
    int flow_iters = 400;
    int s_max = 10;
    int index_offset = 1;
    int gt_offset = 0;  // skip leading gt frames to align 2N-1 outputs
    int resize_w = 0, resize_h = 0;
    bool plot = false;
};

struct PlanOpts {
    int scale = 2;
    bool no_recurrence = false;
    std::string out;
};

int run_synth(const SynthOpts& o, const std::string& config_hash) {
    DegradationSpec spec{o.K, o.tau};
    spec.validate();
    fs::create_directories(o.out);

    int n_clips = o.latents_dir.empty() ? o.clips : 1;
    for (int i = 0; i < n_clips; ++i) {
        uint64_t clip_seed = o.seed + static_cast<uint64_t>(i);
        FrameSequence latents;
        std::string source;
        if (o.latents_dir.empty()) {
            ToySceneSpec scene;
            scene.width = o.width;
            scene.height = o.height;
            scene.frame_count = o.frames;
            scene.fps = o.fps;
            scene.min_shapes = o.shapes_min;
            scene.max_shapes = o.shapes_max;
            scene.min_speed = o.speed_min;
            scene.max_speed = o.speed_max;
            Rng rng(clip_seed);
            latents = generate_toy_latents(scene, rng);
            source = "toy";
        } else {
            auto [seq, m] = load_frame_dir(o.latents_dir);
            latents = std::move(seq);
            source = o.latents_dir;
        }
        TrainingSample sample = build_clip(latents, spec);
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d", i);
        fs::path clip_dir = fs::path(o.out) / name;
        write_clip(clip_dir, sample, clip_seed, source, config_hash, o.bit_depth);
        if (o.save_latents)
            write_frame_dir(clip_dir / "latents", latents, "latents", &spec, clip_seed, source,
                            config_hash, o.bit_depth);
        std::cout << name << ": " << sample.blurry.count() << " blurry + "
                  << sample.ground_truth.count() << " gt frames\n";
    }
    std::cout << "dataset written to " << o.out << "\n";
    return kExitOk;
}

int run_train(const TrainOpts& o, const std::string& config_hash) {
    TrainConfig cfg;
    cfg.arch.scale = o.scale;
    cfg.arch.recurrence = !o.no_recurrence;
    cfg.arch.base_channels = o.base_channels;
    cfg.arch.rdb_growth = o.growth;
    cfg.arch.num_rdbs = o.num_rdbs;
    cfg.arch.hidden_channels = o.hidden;
    cfg.cycle_loss = !o.no_cycle_loss;
    cfg.epsilon = o.epsilon;
    cfg.lr_initial = o.lr;
    cfg.lr_decay_factor = o.lr_decay;
    cfg.epochs_main = o.epochs;
    cfg.epochs_finetune = o.finetune_epochs;
    cfg.batch_size = o.batch;
    cfg.unroll_T = o.unroll;
    cfg.crop_h = o.crop_h;
    cfg.crop_w = o.crop_w;
    cfg.augment = !o.no_augment;
    cfg.warm_start_states = !o.no_warm_start;
    cfg.grad_clip = o.grad_clip;
    cfg.grad_clip_value = o.grad_clip_value;
    cfg.seed = o.seed;
    cfg.validate();

    std::vector<TrainingSample> dataset = load_dataset(o.data);
    std::cout << "loaded " << dataset.size() << " clips from " << o.data << "\n";
    TrainResult r = train(cfg, dataset, o.out, o.resume, config_hash);
    std::cout << "trained " << r.steps << " steps; pixel loss " << r.initial_pixel << " -> "
              << r.final_pixel << "\n";
    std::cout << "checkpoint: " << r.checkpoint_path.string() << "\n";
    return kExitOk;
}

int run_infer(const InferOpts& o, const std::string& config_hash) {
    Checkpoint ck = load_checkpoint(o.checkpoint);
    auto [input, m] = load_frame_dir(o.input);
    if (input.count() < ck.arch.scale + 1)
        throw invalid_input("infer: need at least scale+1 = " +
                            std::to_string(ck.arch.scale + 1) + " frames, got " +
                            std::to_string(input.count()));
    StreamState st = init_state(ck.model, input.frames[0].h, input.frames[0].w);
    FrameSequence out = stream_process(input, ck.model, st, /*clamp=*/true);
    write_frame_dir(o.out, out, "outputs", nullptr, m.seed, o.input, config_hash, o.bit_depth);
    std::cout << input.count() << " inputs -> " << out.count() << " outputs at " << out.fps
              << " fps (" << o.out << ")\n";
    return kExitOk;
}

// minimal bar plot of M(s); bars rise from the bottom, more negative = shorter
void write_smoothness_plot(const fs::path& path, const SmoothnessHistogram& hist) {
    const int W = 440, H = 320, margin = 30;
    Image img(H, W, 3, 1.0);
    double min_m = -1.0;
    for (int s = 0; s <= hist.s_max; ++s)
        if (auto m = hist.m(s)) min_m = std::min(min_m, *m);
    if (auto m = hist.m_overflow()) min_m = std::min(min_m, *m);
    min_m *= 1.05;
    const int n_bars = hist.s_max + 2;
    const int bw = (W - 2 * margin) / n_bars;
    for (int b = 0; b < n_bars; ++b) {
        std::optional<double> m = b <= hist.s_max ? hist.m(b) : hist.m_overflow();
        if (!m) continue;
        double frac = (*m - min_m) / (0.0 - min_m);
        int bh = static_cast<int>(frac * (H - 2 * margin));
        for (int y = H - margin - bh; y < H - margin; ++y)
            for (int x = margin + b * bw + 1; x < margin + (b + 1) * bw - 1; ++x) {
                img.at(y, x, 0) = 0.2;
                img.at(y, x, 1) = 0.35;
                img.at(y, x, 2) = 0.7;
            }
    }
    for (int x = margin; x < W - margin; ++x)
        for (int c = 0; c < 3; ++c) img.at(H - margin, x, c) = 0.0;
    for (int y = margin; y <= H - margin; ++y)
        for (int c = 0; c < 3; ++c) img.at(y, margin, c) = 0.0;
    write_png(path.string(), img, 8);
}

int run_eval(const EvalOpts& o, const std::string& config_hash) {
    auto [pred, pm] = load_frame_dir(o.pred);
    auto [gt, gm] = load_frame_dir(o.gt);
    if (o.gt_offset > 0) {
        if (gt.count() < o.gt_offset + pred.count())
            throw invalid_input("eval: gt too short for --gt-offset alignment");
        FrameSequence trimmed;
        trimmed.fps = gt.fps;
        trimmed.frames.assign(gt.frames.begin() + o.gt_offset,
                              gt.frames.begin() + o.gt_offset + pred.count());
        gt = std::move(trimmed);
    }
    if ((o.resize_w == 0) != (o.resize_h == 0))
        throw config_error("eval: --resize needs both width and height");
    if (o.resize_w > 0) {
        for (auto& f : pred.frames) f = resize_bilinear(f, o.resize_h, o.resize_w);
        for (auto& f : gt.frames) f = resize_bilinear(f, o.resize_h, o.resize_w);
    }

    std::unique_ptr<FlowSource> pred_flow, gt_flow;
    if (!o.flow_pred_dir.empty() || !o.flow_gt_dir.empty()) {
        if (o.flow_pred_dir.empty() || o.flow_gt_dir.empty())
            throw config_error("eval: precomputed flow needs both --flow-pred and --flow-gt");
        pred_flow = std::make_unique<PrecomputedFlowSource>(o.flow_pred_dir);
        gt_flow = std::make_unique<PrecomputedFlowSource>(o.flow_gt_dir);
    } else {
        FlowEstimatorConfig fc;
        fc.alpha = o.flow_alpha;
        fc.iterations = o.flow_iters;
        pred_flow = std::make_unique<VariationalFlowSource>(fc);
        gt_flow = std::make_unique<VariationalFlowSource>(fc);
    }

    MetricReport r = evaluate(pred, gt, *pred_flow, *gt_flow, o.s_max, o.index_offset);
    r.config_hash = config_hash;
    fs::create_directories(o.out);
    {
        std::ofstream jf(fs::path(o.out) / "report.json");
        jf << r.to_json().dump(2) << "\n";
        std::ofstream cf(fs::path(o.out) / "report.csv");
        cf << r.to_csv();
    }
    if (o.plot) write_smoothness_plot(fs::path(o.out) / "smoothness.png", r.hist);
    std::cout << "deblurring      PSNR " << r.psnr_deblur << "  SSIM " << r.ssim_deblur << "\n"
              << "interpolation   PSNR " << r.psnr_interp << "  SSIM " << r.ssim_interp << "\n"
              << "comprehensive   PSNR " << r.psnr_all << "  SSIM " << r.ssim_all << "\n"
              << "flow: " << r.flow_provenance << "\n"
              << "reports in " << o.out << "\n";
    return kExitOk;
}

int run_plan(const PlanOpts& o) {
    PyramidPlan plan = build_plan(o.scale, !o.no_recurrence);
    std::string text = plan.to_json().dump(2) + "\n";
    if (o.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(o.out);
        f << text;
        std::cout << "plan written to " << o.out << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bvi: joint video deblurring and frame-rate up-conversion"};
    app.require_subcommand(0, 1);
    app.set_config("--config")->description("INI config file; sections per subcommand, flags override");
    app.allow_config_extras(false);
    bool print_cfg = false;
    app.add_flag("--print-effective-config", print_cfg,
                 "Print the resolved configuration and its hash");

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "Synthesize blurry/sharp training clips");
    synth->add_option("--out", so.out, "Output dataset directory")->required();
    synth->add_option("--latents", so.latents_dir, "Directory of latent PNG frames (one clip)");
    synth->add_option("--clips", so.clips, "Number of toy clips");
    synth->add_option("--frames", so.frames, "Latent frames per toy clip");
    synth->add_option("--width", so.width);
    synth->add_option("--height", so.height);
    synth->add_option("--fps", so.fps, "Latent frame rate");
    synth->add_option("--K", so.K, "Latent frames per blurry-frame period (even)");
    synth->add_option("--tau", so.tau, "Half exposure window");
    synth->add_option("--seed", so.seed);
    synth->add_option("--shapes-min", so.shapes_min);
    synth->add_option("--shapes-max", so.shapes_max);
    synth->add_option("--speed-min", so.speed_min, "Pixels per latent frame");
    synth->add_option("--speed-max", so.speed_max);
    synth->add_option("--bit-depth", so.bit_depth)->check(CLI::IsMember({8, 16}));
    synth->add_flag("--save-latents", so.save_latents, "Also write the latent frames");

    TrainOpts to;
    auto* tr = app.add_subcommand("train", "Train a model on a synthesized dataset");
    tr->add_option("--data", to.data, "Dataset directory from synth")->required();
    tr->add_option("--out", to.out, "Run directory for checkpoints and logs")->required();
    tr->add_option("--resume", to.resume, "Checkpoint to resume from");
    tr->add_option("--scale", to.scale, "Pyramid scale (>= 2)");
    tr->add_flag("--no-recurrence", to.no_recurrence, "Disable the inter-window ConvLSTM state");
    tr->add_flag("--no-cycle-loss", to.no_cycle_loss, "Disable the cycle consistency term");
    tr->add_flag("--no-augment", to.no_augment, "Disable flips/crop/reversal augmentation");
    tr->add_flag("--no-warm-start", to.no_warm_start,
                 "Use zero entry states for every unroll instead of streaming the clip head");
    tr->add_option("--epochs", to.epochs, "Main epochs at the initial learning rate");
    tr->add_option("--finetune-epochs", to.finetune_epochs, "Extra epochs at the decayed rate");
    tr->add_option("--lr", to.lr, "Initial learning rate");
    tr->add_option("--lr-decay", to.lr_decay, "Decay factor for the finetune phase");
    tr->add_option("--batch", to.batch);
    tr->add_option("--unroll", to.unroll, "Temporal unroll length T");
    tr->add_option("--seed", to.seed);
    tr->add_option("--base-channels", to.base_channels);
    tr->add_option("--growth", to.growth, "Residual dense block growth rate");
    tr->add_option("--num-rdbs", to.num_rdbs);
    tr->add_option("--hidden", to.hidden, "ConvLSTM hidden channels");
    tr->add_option("--crop-h", to.crop_h, "Training crop height (0 = full frames)");
    tr->add_option("--crop-w", to.crop_w);
    tr->add_flag("--grad-clip", to.grad_clip, "Clip per-element gradients");
    tr->add_option("--grad-clip-value", to.grad_clip_value);
    tr->add_option("--epsilon", to.epsilon, "Charbonnier constant");

    InferOpts io;
    auto* in = app.add_subcommand("infer", "Run a checkpoint over a blurry frame directory");
    in->add_option("--checkpoint", io.checkpoint)->required();
    in->add_option("--input", io.input, "Input frame directory with manifest")->required();
    in->add_option("--out", io.out, "Output frame directory")->required();
    in->add_option("--bit-depth", io.bit_depth)->check(CLI::IsMember({8, 16}));

    EvalOpts eo;
    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    ev->add_option("--pred", eo.pred)->required();
    ev->add_option("--gt", eo.gt)->required();
    ev->add_option("--out", eo.out, "Report directory")->required();
    ev->add_option("--flow-pred", eo.flow_pred_dir, "Precomputed flow rasters for predictions");
    ev->add_option("--flow-gt", eo.flow_gt_dir, "Precomputed flow rasters for ground truth");
    ev->add_option("--flow-alpha", eo.flow_alpha, "Variational smoothness weight");
    ev->add_option("--flow-iters", eo.flow_iters);
    ev->add_option("--smax", eo.s_max, "Largest histogram bin");
    ev->add_option("--index-offset", eo.index_offset, "Output index of the first frame");
    ev->add_option("--gt-offset", eo.gt_offset,
                   "Skip this many leading gt frames to align with the predictions");
    ev->add_option("--resize-w", eo.resize_w, "Resize frames before scoring (bilinear)");
    ev->add_option("--resize-h", eo.resize_h);
    ev->add_flag("--plot", eo.plot, "Write a smoothness bar plot PNG");

    PlanOpts po;
    auto* pl = app.add_subcommand("plan", "Dump the pyramid dataflow plan as JSON");
    pl->add_option("--scale", po.scale)->required();
    pl->add_flag("--no-recurrence", po.no_recurrence);
    pl->add_option("--out", po.out, "Write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    std::string effective = app.config_to_str(true, false);
    std::string config_hash = hex64(fnv1a64(effective));
    if (print_cfg) {
        std::cout << effective;
        std::cout << "# config_hash: " << config_hash << "\n";
    }

    try {
        if (app.got_subcommand(synth)) return run_synth(so, config_hash);
        if (app.got_subcommand(tr)) return run_train(to, config_hash);
        if (app.got_subcommand(in)) return run_infer(io, config_hash);
        if (app.got_subcommand(ev)) return run_eval(eo, config_hash);
        if (app.got_subcommand(pl)) return run_plan(po);
        if (!print_cfg) std::cout << app.help();
        return kExitOk;
    } catch (const numeric_error& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const invalid_input& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
