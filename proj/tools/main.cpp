#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "a3d2/gradcheck.hpp"
#include "a3d2/phantom.hpp"
#include "a3d2/pipeline.hpp"

namespace fs = std::filesystem;
using namespace a3d2;

namespace {

struct PhantomArgs {
    std::string out;
    int clips = 4;
    PhantomParams params;
};

int cmd_phantom(const PhantomArgs& a) {
    gen_phantom_dataset(a.out, a.clips, a.params, a.params.seed);
    std::cout << "wrote " << a.clips << " clips (" << a.params.frames << " frames, "
              << a.params.size << "x" << a.params.size << ") to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    TrainConfig cfg;
    int size = 448;
};

int cmd_train(TrainArgs& a) {
    a.cfg.height = a.cfg.width = a.size;
    const auto clips = load_dataset(a.data);
    TrainResult res = train(a.cfg, clips);
    std::cout << "trained " << res.log.steps.size() << " steps over "
              << (res.log.steps.empty() ? 0 : res.log.steps.back().epoch) << " epochs\n";
    if (!res.log.steps.empty()) {
        std::cout << "final loss " << res.log.steps.back().loss << ", train soft dice "
                  << res.log.final_train_soft_dice << "\n";
    }
    if (!res.final_eval.per_image.empty()) {
        std::cout << "test mean IOU raw " << res.final_eval.mean_raw.iou << ", post "
                  << res.final_eval.mean_post.iou << "\n";
    }
    std::cout << "checkpoint: " << res.final_checkpoint_path << "\n";
    std::cout << "log: " << res.log_path << "\n";
    return 0;
}

struct EvalArgs {
    std::string ckpt, data, out;
    uint64_t seed = 1;
    double threshold = 0.5, tau = 0.05;
};

int cmd_eval(const EvalArgs& a) {
    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    const auto clips = load_dataset(a.data);
    DatasetPartition part = partition(clips, a.seed);
    EvalOptions opt;
    opt.height = ck.config.height;
    opt.width = ck.config.width;
    opt.threshold = a.threshold;
    opt.tau = a.tau;
    EvalResult res = evaluate(ck.params, clips, part.test, opt);
    auto show = [](const char* tag, const Metrics& m) {
        std::printf("%-12s iou=%.4f sens=%.4f spec=%.4f dice=%.4f\n", tag, m.iou, m.sensitivity,
                    m.specificity, m.dice);
    };
    show("mean raw", res.mean_raw);
    show("mean post", res.mean_post);
    show("pooled raw", res.pooled_raw);
    show("pooled post", res.pooled_post);
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_metrics_report((fs::path(a.out) / "metrics_raw.csv").string(), res, false);
        write_metrics_report((fs::path(a.out) / "metrics_post.csv").string(), res, true);
        std::cout << "reports written to " << a.out << "\n";
    }
    return 0;
}

struct SegmentArgs {
    std::string ckpt, clip, out;
    double threshold = 0.5, tau = 0.05;
    int n = -1;
};

int cmd_segment(const SegmentArgs& a) {
    LoadedCheckpoint ck = load_checkpoint(a.ckpt);
    Clip clip;
    clip.id = fs::path(a.clip).filename().string();
    const fs::path frames_dir = fs::path(a.clip) / "frames";
    if (!fs::is_directory(frames_dir)) {
        throw std::runtime_error("clip directory '" + a.clip + "' has no frames/ subdirectory");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(frames_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) clip.frames.push_back(read_png_gray(f.string()));

    const auto masks = segment_video(ck.params, clip, a.n, a.threshold, a.tau);
    fs::create_directories(a.out);
    for (size_t i = 0; i < masks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", i);
        write_png_gray((fs::path(a.out) / name).string(), mask_to_png8(masks[i]));
    }
    std::cout << "wrote " << masks.size() << " masks to " << a.out << "\n";
    return 0;
}

struct GradcheckArgs {
    std::string scope = "all";
    uint64_t seed = 7;
    int entries = 210;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    bool all_ok = true;
    const bool want_ops = a.scope == "all" || a.scope == "ops";
    const bool want_net = a.scope == "all" || a.scope == "network";
    bool matched = want_ops || want_net;

    std::printf("%-22s %12s %8s  %s\n", "op", "max_rel_err", "entries", "status");
    if (want_ops || (!want_net && !want_ops)) {
        for (const CheckableOp& op : standard_op_checks(a.seed)) {
            if (!want_ops && op.name != a.scope) continue;
            matched = true;
            const GradcheckReport rep = gradcheck(op);
            const bool ok = rep.max_rel_err < 1e-5;
            all_ok = all_ok && ok;
            std::printf("%-22s %12.3e %8zu  %s\n", op.name.c_str(), rep.max_rel_err,
                        rep.entries_checked, ok ? "pass" : "FAIL");
        }
    }
    if (want_net) {
        ModelConfig cfg;
        cfg.n = 1;
        cfg.height = cfg.width = 32;
        cfg.seed = a.seed;
        const NetworkGradcheckReport rep =
            whole_network_gradcheck(cfg, static_cast<size_t>(a.entries), a.seed);
        const bool ok = rep.max_rel_err < 1e-4;
        all_ok = all_ok && ok;
        std::printf("%-22s %12.3e %8zu  %s (%zu kink points skipped)\n", "network(32x32,N=1)",
                    rep.max_rel_err, rep.entries_checked, ok ? "pass" : "FAIL", rep.kinks_skipped);
    }
    if (!matched) throw std::runtime_error("gradcheck: unknown scope '" + a.scope + "'");
    return all_ok ? 0 : 1;
}

int cmd_info(const std::string& path) {
    LoadedCheckpoint ck = load_checkpoint(path);
    std::cout << "N: " << ck.config.n << " (window " << ck.config.window() << " frames)\n";
    std::cout << "resolution: " << ck.config.height << "x" << ck.config.width << "\n";
    std::cout << "channels: base " << ck.config.base_channels << ", fusion "
              << ck.config.fusion_channels << ", fused " << ck.config.fused_channels << "\n";
    std::cout << "tensors: " << ck.params.size() << "\n";
    std::cout << "parameters: " << param_count(ck.params) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D-2D temporal-fusion vessel segmentation"};
    app.require_subcommand(1);

    PhantomArgs pa;
    CLI::App* phantom = app.add_subcommand("phantom", "generate a synthetic angiography dataset");
    phantom->set_config("--config", "", "flat key=value config file");
    phantom->add_option("--out", pa.out, "output dataset directory")->required();
    phantom->add_option("--clips", pa.clips, "number of clips");
    phantom->add_option("--frames", pa.params.frames, "frames per clip");
    phantom->add_option("--size", pa.params.size, "square frame edge (px)");
    phantom->add_option("--seed", pa.params.seed, "master seed");
    phantom->add_option("--depth", pa.params.depth, "vessel tree branching depth");
    phantom->add_option("--radius-min", pa.params.radius_min, "deepest tube radius (px)");
    phantom->add_option("--radius-max", pa.params.radius_max, "trunk radius (px)");
    phantom->add_option("--front-speed", pa.params.front_speed, "contrast front speed (px/frame)");
    phantom->add_option("--motion-amplitude", pa.params.motion_amplitude, "cardiac sway (px)");
    phantom->add_option("--motion-period", pa.params.motion_period, "cardiac period (frames)");
    phantom->add_option("--noise-std", pa.params.noise_std, "additive gaussian noise std");
    phantom->add_option("--noise-signal", pa.params.noise_signal, "signal-dependent noise scale");
    phantom->add_option("--blobs", pa.params.background_blobs, "background blob count");
    phantom->add_flag("--occlusion", pa.params.occlusion, "add a cyclically crossing vessel");

    TrainArgs ta;
    CLI::App* tr = app.add_subcommand("train", "train a model on a dataset");
    tr->set_config("--config", "", "flat key=value config file");
    tr->add_option("--data", ta.data, "dataset root")->required();
    tr->add_option("--n", ta.cfg.n, "temporal half-window (0 = 2D baseline)");
    tr->add_option("--epochs", ta.cfg.epochs, "training epochs");
    tr->add_option("--batch", ta.cfg.batch_size, "batch size");
    tr->add_option("--lr", ta.cfg.lr, "learning rate");
    tr->add_option("--wd", ta.cfg.weight_decay, "weight decay");
    tr->add_option("--size", ta.size, "square working resolution (divisible by 32)");
    tr->add_option("--seed", ta.cfg.seed, "run seed");
    tr->add_option("--out", ta.cfg.out_dir, "output directory");
    tr->add_option("--eval-every", ta.cfg.eval_every, "epochs between test evals (0 = final only)");
    tr->add_option("--threshold", ta.cfg.threshold, "binarization threshold");
    tr->add_option("--tau", ta.cfg.tau, "small-component area ratio");
    tr->add_option("--max-steps", ta.cfg.max_steps, "hard cap on optimizer steps (0 = none)");
    tr->add_option("--stop-at-dice", ta.cfg.stop_at_train_dice,
                   "stop once epoch-mean train soft dice reaches this (0 = off)");
    tr->add_option("--init", ta.cfg.init_checkpoint, "initialize weights from a checkpoint");

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    ev->set_config("--config", "", "flat key=value config file");
    ev->add_option("--ckpt", ea.ckpt, "checkpoint path")->required();
    ev->add_option("--data", ea.data, "dataset root")->required();
    ev->add_option("--seed", ea.seed, "partition seed (match the training run)");
    ev->add_option("--threshold", ea.threshold, "binarization threshold");
    ev->add_option("--tau", ea.tau, "small-component area ratio");
    ev->add_option("--out", ea.out, "directory for metrics reports");

    SegmentArgs sa;
    CLI::App* seg = app.add_subcommand("segment", "segment every frame of one clip");
    seg->set_config("--config", "", "flat key=value config file");
    seg->add_option("--ckpt", sa.ckpt, "checkpoint path")->required();
    seg->add_option("--clip", sa.clip, "clip directory (with frames/)")->required();
    seg->add_option("--out", sa.out, "output mask directory")->required();
    seg->add_option("--threshold", sa.threshold, "binarization threshold");
    seg->add_option("--tau", sa.tau, "small-component area ratio");
    seg->add_option("--n", sa.n, "expected N; must match the checkpoint");

    GradcheckArgs ga;
    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference verification of every operator");
    gc->add_option("--scope", ga.scope, "all | ops | network | <op name>");
    gc->add_option("--seed", ga.seed, "check seed");
    gc->add_option("--entries", ga.entries, "whole-network parameter samples");

    std::string info_path;
    CLI::App* info = app.add_subcommand("info", "print a checkpoint summary");
    info->add_option("checkpoint", info_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*phantom) return cmd_phantom(pa);
        if (*tr) return cmd_train(ta);
        if (*ev) return cmd_eval(ea);
        if (*seg) return cmd_segment(sa);
        if (*gc) return cmd_gradcheck(ga);
        if (*info) return cmd_info(info_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
