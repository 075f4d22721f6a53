#include "a3d2/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "a3d2/loss.hpp"
#include "a3d2/postprocess.hpp"

namespace fs = std::filesystem;

namespace a3d2 {

namespace {

struct PreparedSlice {
    int clip_index = 0;
    int begin = 0;  // slice start within the clip
    std::vector<Tensor<float>> frames;        // preprocessed, (H,W) each
    std::vector<Tensor<float>> targets;       // float 0/1, (H,W) each
    std::vector<Mask> masks;                  // preprocessed binary masks
    std::vector<WindowSample> windows;
};

std::vector<PreparedSlice> prepare(const std::vector<Clip>& clips,
                                   const std::vector<ClipSlice>& slices, int h, int w, int n) {
    std::vector<PreparedSlice> out;
    out.reserve(slices.size());
    for (const ClipSlice& s : slices) {
        const Clip& clip = clips.at(static_cast<size_t>(s.clip_index));
        PreparedSlice ps;
        ps.clip_index = s.clip_index;
        ps.begin = s.begin;
        for (int i = s.begin; i < s.end; ++i) {
            ps.frames.push_back(preprocess_frame(clip.frames[static_cast<size_t>(i)], h, w));
            Mask m = preprocess_mask(clip.labels[static_cast<size_t>(i)], h, w);
            ps.targets.push_back(mask_to_tensor(m));
            ps.masks.push_back(std::move(m));
        }
        ps.windows = window_samples(s.length(), n);
        out.push_back(std::move(ps));
    }
    return out;
}

Tensor<float> assemble_batch(const std::vector<PreparedSlice>& slices,
                             const std::vector<std::pair<int, int>>& refs, size_t lo, size_t hi,
                             int n, int h, int w) {
    const int bsz = static_cast<int>(hi - lo);
    const int depth = 2 * n + 1;
    Tensor<float> frames({bsz, 1, depth, h, w});
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t k = lo; k < hi; ++k) {
        const PreparedSlice& ps = slices[static_cast<size_t>(refs[k].first)];
        const WindowSample& ws = ps.windows[static_cast<size_t>(refs[k].second)];
        for (int d = 0; d < depth; ++d) {
            const Tensor<float>& fr = ps.frames[static_cast<size_t>(ws.window[static_cast<size_t>(d)])];
            std::copy(fr.data.begin(), fr.data.end(),
                      frames.data.begin() + ((k - lo) * static_cast<size_t>(depth) + static_cast<size_t>(d)) * plane);
        }
    }
    return frames;
}

Tensor<float> slice_image(const Tensor<float>& batch, int index) {
    const int h = batch.dim(2), w = batch.dim(3);
    const size_t plane = static_cast<size_t>(h) * w;
    Tensor<float> out({h, w});
    std::copy_n(batch.data.begin() + static_cast<size_t>(index) * plane, plane, out.data.begin());
    return out;
}

Metrics mean_metrics(const std::vector<MetricsRecord>& records, bool post) {
    Metrics m;
    if (records.empty()) return m;
    for (const MetricsRecord& r : records) {
        const Metrics& x = post ? r.post : r.raw;
        m.iou += x.iou;
        m.sensitivity += x.sensitivity;
        m.specificity += x.specificity;
        m.dice += x.dice;
    }
    const double k = static_cast<double>(records.size());
    m.iou /= k;
    m.sensitivity /= k;
    m.specificity /= k;
    m.dice /= k;
    return m;
}

}  // namespace

EvalResult evaluate_predictions(const std::vector<Mask>& preds, const std::vector<Mask>& targets,
                                const std::vector<std::string>& clip_ids,
                                const std::vector<int>& frame_indices, double tau) {
    if (preds.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (preds.size() != targets.size() || preds.size() != clip_ids.size() ||
        preds.size() != frame_indices.size()) {
        throw std::invalid_argument("evaluate: prediction/target/id count mismatch");
    }
    EvalResult res;
    ConfusionCounts pooled_raw, pooled_post;
    for (size_t i = 0; i < preds.size(); ++i) {
        MetricsRecord rec;
        rec.clip_id = clip_ids[i];
        rec.frame_index = frame_indices[i];
        const Mask post_mask = postprocess(preds[i], tau);
        const ConfusionCounts craw = confusion(preds[i], targets[i]);
        const ConfusionCounts cpost = confusion(post_mask, targets[i]);
        rec.raw = Metrics::from_counts(craw);
        rec.post = Metrics::from_counts(cpost);
        pooled_raw.tp += craw.tp;
        pooled_raw.fp += craw.fp;
        pooled_raw.tn += craw.tn;
        pooled_raw.fn += craw.fn;
        pooled_post.tp += cpost.tp;
        pooled_post.fp += cpost.fp;
        pooled_post.tn += cpost.tn;
        pooled_post.fn += cpost.fn;
        res.per_image.push_back(std::move(rec));
        res.raw_masks.push_back(preds[i]);
        res.post_masks.push_back(post_mask);
        res.targets.push_back(targets[i]);
    }
    res.mean_raw = mean_metrics(res.per_image, false);
    res.mean_post = mean_metrics(res.per_image, true);
    res.pooled_raw = Metrics::from_counts(pooled_raw);
    res.pooled_post = Metrics::from_counts(pooled_post);
    return res;
}

EvalResult evaluate(const ParamMap<float>& params, const std::vector<Clip>& clips,
                    const std::vector<ClipSlice>& slices, const EvalOptions& opt) {
    if (slices.empty()) throw std::invalid_argument("evaluate: empty test set");
    const ArchDims dims = arch_from_params(params);
    const auto prepared = prepare(clips, slices, opt.height, opt.width, dims.n);

    std::vector<Mask> preds, targets;
    std::vector<std::string> ids;
    std::vector<int> frame_indices;
    for (const PreparedSlice& ps : prepared) {
        for (size_t wi = 0; wi < ps.windows.size(); ++wi) {
            Tensor<float> frames({1, 1, 2 * dims.n + 1, opt.height, opt.width});
            const size_t plane = static_cast<size_t>(opt.height) * opt.width;
            for (int d = 0; d < 2 * dims.n + 1; ++d) {
                const Tensor<float>& fr =
                    ps.frames[static_cast<size_t>(ps.windows[wi].window[static_cast<size_t>(d)])];
                std::copy(fr.data.begin(), fr.data.end(),
                          frames.data.begin() + static_cast<size_t>(d) * plane);
            }
            ForwardResult<float> fr = forward(frames, params);
            preds.push_back(binarize(fr.prob, opt.threshold));
            targets.push_back(ps.masks[wi]);
            ids.push_back(clips.at(static_cast<size_t>(ps.clip_index)).id);
            frame_indices.push_back(ps.begin + ps.windows[wi].center);
        }
    }
    return evaluate_predictions(preds, targets, ids, frame_indices, opt.tau);
}

std::vector<Mask> segment_video(const ParamMap<float>& params, const Clip& clip, int expected_n,
                                double threshold, double tau) {
    const ArchDims dims = arch_from_params(params);
    if (expected_n >= 0 && expected_n != dims.n) {
        throw std::invalid_argument("segment: requested N=" + std::to_string(expected_n) +
                                    " conflicts with checkpoint N=" + std::to_string(dims.n));
    }
    if (clip.frames.empty()) throw std::invalid_argument("segment: clip has no frames");

    // Process at the nearest /32 resolution; the architecture is resolution-
    // independent, so any divisible-by-32 size works.
    auto round32 = [](int v) { return std::max(32, ((v + 15) / 32) * 32); };
    const int h = round32(clip.frames.front().height);
    const int w = round32(clip.frames.front().width);

    std::vector<Tensor<float>> frames;
    frames.reserve(clip.frames.size());
    for (const Image& img : clip.frames) frames.push_back(preprocess_frame(img, h, w));

    const auto windows = window_samples(static_cast<int>(frames.size()), dims.n);
    std::vector<Mask> masks;
    const size_t plane = static_cast<size_t>(h) * w;
    for (const WindowSample& ws : windows) {
        Tensor<float> input({1, 1, 2 * dims.n + 1, h, w});
        for (int d = 0; d < 2 * dims.n + 1; ++d) {
            const Tensor<float>& fr = frames[static_cast<size_t>(ws.window[static_cast<size_t>(d)])];
            std::copy(fr.data.begin(), fr.data.end(), input.data.begin() + static_cast<size_t>(d) * plane);
        }
        ForwardResult<float> out = forward(input, params);
        masks.push_back(postprocess(binarize(out.prob, threshold), tau));
    }
    return masks;
}

TrainResult train(const TrainConfig& config, const std::vector<Clip>& clips) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    TrainResult res;
    res.model_config = config.model_config();
    res.part = partition(clips, config.seed);
    const auto train_slices = prepare(clips, res.part.train, config.height, config.width, config.n);

    std::vector<std::pair<int, int>> samples;  // (slice index, window index)
    for (size_t si = 0; si < train_slices.size(); ++si) {
        for (size_t wi = 0; wi < train_slices[si].windows.size(); ++wi) {
            samples.emplace_back(static_cast<int>(si), static_cast<int>(wi));
        }
    }
    if (samples.empty()) throw std::invalid_argument("train: empty training set");

    if (config.init_checkpoint.empty()) {
        res.params = build_network<float>(res.model_config);
    } else {
        LoadedCheckpoint ck = load_checkpoint(config.init_checkpoint);
        if (ck.config.n != config.n) {
            throw std::invalid_argument("train: init checkpoint has N=" + std::to_string(ck.config.n) +
                                        ", run wants N=" + std::to_string(config.n));
        }
        res.params = std::move(ck.params);
    }

    fs::create_directories(config.out_dir);
    res.final_checkpoint_path = (fs::path(config.out_dir) / "model_final.a3d2").string();
    res.best_checkpoint_path = (fs::path(config.out_dir) / "model_best.a3d2").string();
    res.log_path = (fs::path(config.out_dir) / "train_log.txt").string();

    EvalOptions eval_opt;
    eval_opt.height = config.height;
    eval_opt.width = config.width;
    eval_opt.threshold = config.threshold;
    eval_opt.tau = config.tau;

    double best_iou = -1.0;
    int step = 0;
    bool done = false;
    for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
        std::vector<size_t> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0xE0000 + static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_dice_sum = 0.0;
        size_t epoch_images = 0;
        for (size_t lo = 0; lo < order.size() && !done; lo += static_cast<size_t>(config.batch_size)) {
            const size_t hi = std::min(order.size(), lo + static_cast<size_t>(config.batch_size));
            std::vector<std::pair<int, int>> batch_refs;
            for (size_t k = lo; k < hi; ++k) batch_refs.push_back(samples[order[k]]);

            Tensor<float> frames = assemble_batch(train_slices, batch_refs, 0, batch_refs.size(),
                                                  config.n, config.height, config.width);
            ForwardResult<float> fwd = forward(frames, res.params);

            const int bsz = static_cast<int>(batch_refs.size());
            Tensor<float> grad_mask(fwd.prob.shape);
            const size_t plane = static_cast<size_t>(config.height) * config.width;
            double dice_part = 0.0;
            for (int i = 0; i < bsz; ++i) {
                const PreparedSlice& ps = train_slices[static_cast<size_t>(batch_refs[static_cast<size_t>(i)].first)];
                const Tensor<float>& target =
                    ps.targets[static_cast<size_t>(ps.windows[static_cast<size_t>(batch_refs[static_cast<size_t>(i)].second)].center)];
                Tensor<float> pred = slice_image(fwd.prob, i);
                ScalarWithGrad<float> dl = dice_loss(pred, target);
                dice_part += dl.value;
                epoch_dice_sum += 1.0 - dl.value;
                ++epoch_images;
                for (size_t j = 0; j < plane; ++j) {
                    grad_mask.data[static_cast<size_t>(i) * plane + j] =
                        dl.grad.data[j] / static_cast<float>(bsz);
                }
            }
            dice_part /= bsz;
            const double loss = total_loss(dice_part, res.params, config.weight_decay);
            ++step;
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
            }

            BackwardResult<float> grads = backward(fwd.trace, res.params, grad_mask);
            sgd_step(res.params, grads.param_grads, config.lr, config.weight_decay);
            res.log.steps.push_back({step, epoch, loss});

            if (config.max_steps > 0 && step >= config.max_steps) done = true;
        }

        res.log.final_train_soft_dice = epoch_images ? epoch_dice_sum / static_cast<double>(epoch_images) : 0.0;
        if (config.stop_at_train_dice > 0 && res.log.final_train_soft_dice >= config.stop_at_train_dice) {
            done = true;
        }

        const bool last = done || epoch == config.epochs;
        if (!res.part.test.empty() &&
            ((config.eval_every > 0 && epoch % config.eval_every == 0) || last)) {
            EvalResult ev = evaluate(res.params, clips, res.part.test, eval_opt);
            res.log.evals.push_back({epoch, ev.mean_raw.iou, ev.mean_post.iou});
            if (ev.mean_post.iou > best_iou) {
                best_iou = ev.mean_post.iou;
                save_checkpoint(res.params, res.model_config, res.best_checkpoint_path);
            }
            if (last) res.final_eval = std::move(ev);
        }
    }

    save_checkpoint(res.params, res.model_config, res.final_checkpoint_path);
    if (best_iou < 0) {
        // no eval ran (empty test set); keep best == final for a complete run dir
        save_checkpoint(res.params, res.model_config, res.best_checkpoint_path);
    }
    res.log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_train_log(res.log_path, res.log);
    if (!res.final_eval.per_image.empty()) {
        write_metrics_report((fs::path(config.out_dir) / "metrics_raw.csv").string(), res.final_eval, false);
        write_metrics_report((fs::path(config.out_dir) / "metrics_post.csv").string(), res.final_eval, true);
    }
    return res;
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write train log '" + path + "'");
    os << "step\tepoch\tloss\n";
    os.precision(9);
    for (const TrainLog::Step& s : log.steps) {
        os << s.step << "\t" << s.epoch << "\t" << s.loss << "\n";
    }
}

void write_metrics_report(const std::string& path, const EvalResult& result, bool post) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write metrics report '" + path + "'");
    os.precision(9);
    os << "clip_id,frame_index,iou,sens,spec,dice\n";
    auto row = [&](const std::string& id, int frame, const Metrics& m) {
        os << id << "," << frame << "," << m.iou << "," << m.sensitivity << "," << m.specificity
           << "," << m.dice << "\n";
    };
    for (const MetricsRecord& r : result.per_image) {
        row(r.clip_id, r.frame_index, post ? r.post : r.raw);
    }
    row("mean", -1, post ? result.mean_post : result.mean_raw);
    row("pooled", -1, post ? result.pooled_post : result.pooled_raw);
}

}  // namespace a3d2
