#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "a3d2/phantom.hpp"
#include "a3d2/pipeline.hpp"

using namespace a3d2;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("a3d2_pipe_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

std::vector<Clip> tiny_dataset(int clips, int frames, uint64_t seed, int size = 64) {
    std::vector<Clip> out;
    for (int i = 0; i < clips; ++i) {
        PhantomParams pp;
        pp.size = size;
        pp.frames = frames;
        pp.noise_std = 3.0;
        pp.background_blobs = 2;
        pp.seed = mix_seed(seed, static_cast<uint64_t>(i));
        Clip c = gen_phantom(pp);
        c.id = "clip_" + std::to_string(i);
        out.push_back(std::move(c));
    }
    return out;
}

TrainConfig tiny_train_config(const TempDir& tmp) {
    TrainConfig cfg;
    cfg.n = 1;
    cfg.height = cfg.width = 64;
    cfg.epochs = 1;
    cfg.seed = 3;
    cfg.out_dir = (tmp.path / "run").string();
    return cfg;
}

}  // namespace

TEST_CASE("train: step arithmetic — 8 samples, batch 4, 1 epoch = 2 steps") {
    TempDir tmp;
    // one 10-frame clip: test round(10/6)=2, train 8 windows
    const auto clips = tiny_dataset(1, 10, 21);
    TrainConfig cfg = tiny_train_config(tmp);
    const TrainResult res = train(cfg, clips);
    CHECK(res.log.steps.size() == 2);
    CHECK(res.log.steps.back().epoch == 1);
    CHECK(res.part.train[0].length() == 8);
    CHECK(fs::exists(res.final_checkpoint_path));
    CHECK(fs::exists(res.log_path));
    for (const auto& s : res.log.steps) CHECK(std::isfinite(s.loss));
}

TEST_CASE("train: deterministic given seeds") {
    TempDir tmp1, tmp2;
    const auto clips = tiny_dataset(1, 10, 22);
    TrainConfig cfg1 = tiny_train_config(tmp1);
    TrainConfig cfg2 = tiny_train_config(tmp2);
    const TrainResult a = train(cfg1, clips);
    const TrainResult b = train(cfg2, clips);
    REQUIRE(a.log.steps.size() == b.log.steps.size());
    for (size_t i = 0; i < a.log.steps.size(); ++i) {
        CHECK(a.log.steps[i].loss == b.log.steps[i].loss);
    }
}

TEST_CASE("train: empty dataset and bad config are rejected") {
    TempDir tmp;
    TrainConfig cfg = tiny_train_config(tmp);
    CHECK_THROWS_WITH_AS((void)train(cfg, {}), doctest::Contains("empty training set"),
                         std::invalid_argument);
    cfg.lr = 0;
    CHECK_THROWS_AS((void)train(cfg, tiny_dataset(1, 10, 23)), std::invalid_argument);
}

TEST_CASE("train: non-finite loss aborts naming the step") {
    TempDir tmp;
    const auto clips = tiny_dataset(1, 10, 24);
    TrainConfig cfg = tiny_train_config(tmp);
    cfg.lr = 1e30;  // detonate the weights
    cfg.epochs = 3;
    CHECK_THROWS_WITH_AS((void)train(cfg, clips), doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("evaluate: ground-truth masks fed back as predictions score 1 everywhere") {
    const auto clips = tiny_dataset(2, 8, 25);
    std::vector<Mask> preds, targets;
    std::vector<std::string> ids;
    std::vector<int> frames;
    for (const Clip& c : clips) {
        for (size_t f = 0; f < c.labels.size(); ++f) {
            preds.push_back(c.labels[f]);
            targets.push_back(c.labels[f]);
            ids.push_back(c.id);
            frames.push_back(static_cast<int>(f));
        }
    }
    const EvalResult res = evaluate_predictions(preds, targets, ids, frames, 0.05);
    for (const MetricsRecord& r : res.per_image) {
        CHECK(r.raw.iou == 1.0);
        CHECK(r.raw.sensitivity == 1.0);
        CHECK(r.raw.specificity == 1.0);
        CHECK(r.raw.dice == 1.0);
    }
    CHECK(res.mean_raw.iou == 1.0);
    CHECK(res.pooled_raw.dice == 1.0);
}

TEST_CASE("evaluate: all-background predictions give sensitivity 0, specificity 1") {
    const auto clips = tiny_dataset(1, 8, 26);
    std::vector<Mask> preds, targets;
    std::vector<std::string> ids;
    std::vector<int> frames;
    for (size_t f = 0; f < clips[0].labels.size(); ++f) {
        preds.push_back(Mask(64, 64));
        targets.push_back(clips[0].labels[f]);
        ids.push_back(clips[0].id);
        frames.push_back(static_cast<int>(f));
    }
    const EvalResult res = evaluate_predictions(preds, targets, ids, frames, 0.05);
    CHECK(res.mean_raw.sensitivity == 0.0);
    CHECK(res.mean_raw.specificity == 1.0);
}

TEST_CASE("evaluate: mean equals the arithmetic mean of per-image values") {
    const auto clips = tiny_dataset(1, 12, 27);
    const auto params = build_network<float>(ModelConfig{1, 64, 64, 8, 16, 3, 9});
    DatasetPartition part = partition(clips, 4);
    EvalOptions opt;
    opt.height = opt.width = 64;
    const EvalResult res = evaluate(params, clips, part.test, opt);
    REQUIRE(!res.per_image.empty());
    double sum = 0;
    for (const MetricsRecord& r : res.per_image) sum += r.raw.iou;
    CHECK(res.mean_raw.iou == doctest::Approx(sum / res.per_image.size()).epsilon(1e-12));
    CHECK_THROWS_WITH_AS((void)evaluate(params, clips, {}, opt), doctest::Contains("empty test"),
                         std::invalid_argument);
}

TEST_CASE("evaluate: reported metrics match an independent recount of the masks") {
    const auto clips = tiny_dataset(1, 8, 28);
    const auto params = build_network<float>(ModelConfig{1, 64, 64, 8, 16, 3, 10});
    DatasetPartition part = partition(clips, 4);
    EvalOptions opt;
    opt.height = opt.width = 64;
    const EvalResult res = evaluate(params, clips, part.test, opt);
    REQUIRE(res.raw_masks.size() == res.per_image.size());
    for (size_t i = 0; i < res.per_image.size(); ++i) {
        int64_t tp = 0, fp = 0, tn = 0, fn = 0;
        const Mask& p = res.raw_masks[i];
        const Mask& t = res.targets[i];
        for (size_t j = 0; j < p.size(); ++j) {
            tp += (p.pixels[j] && t.pixels[j]);
            fp += (p.pixels[j] && !t.pixels[j]);
            tn += (!p.pixels[j] && !t.pixels[j]);
            fn += (!p.pixels[j] && t.pixels[j]);
        }
        const double want_iou = (tp + fp + fn) == 0 ? 1.0 : double(tp) / double(tp + fp + fn);
        CHECK(res.per_image[i].raw.iou == want_iou);
        const double want_sens = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
        CHECK(res.per_image[i].raw.sensitivity == want_sens);
    }
}

TEST_CASE("train: per-epoch shuffle visits every sample exactly once") {
    // indirect check through the shuffle machinery the pipeline uses
    std::vector<size_t> order(13);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(3, 0xE0001));
    std::shuffle(order.begin(), order.end(), rng);
    std::set<size_t> seen(order.begin(), order.end());
    CHECK(seen.size() == order.size());
}

TEST_CASE("segment_video: one mask per frame, strictly binary, N conflict rejected") {
    const auto clips = tiny_dataset(1, 7, 29);
    const auto params = build_network<float>(ModelConfig{1, 64, 64, 8, 16, 3, 11});
    const auto masks = segment_video(params, clips[0]);
    REQUIRE(masks.size() == clips[0].frames.size());
    for (const Mask& m : masks) {
        CHECK(m.width == 64);
        CHECK(m.height == 64);
        for (uint8_t v : m.pixels) CHECK(v <= 1);
    }
    CHECK_THROWS_WITH_AS((void)segment_video(params, clips[0], 2), doctest::Contains("N=1"),
                         std::invalid_argument);
}

TEST_CASE("reports: train log and metrics files have the pinned layout") {
    TempDir tmp;
    const auto clips = tiny_dataset(1, 10, 30);
    TrainConfig cfg = tiny_train_config(tmp);
    const TrainResult res = train(cfg, clips);

    std::ifstream log(res.log_path);
    std::string header;
    std::getline(log, header);
    CHECK(header == "step\tepoch\tloss");
    int rows = 0;
    for (std::string line; std::getline(log, line);) ++rows;
    CHECK(rows == static_cast<int>(res.log.steps.size()));

    std::ifstream metrics(fs::path(cfg.out_dir) / "metrics_raw.csv");
    REQUIRE(metrics.good());
    std::getline(metrics, header);
    CHECK(header == "clip_id,frame_index,iou,sens,spec,dice");
    std::vector<std::string> lines;
    for (std::string line; std::getline(metrics, line);) lines.push_back(line);
    REQUIRE(lines.size() == res.final_eval.per_image.size() + 2);
    CHECK(lines[lines.size() - 2].rfind("mean,-1,", 0) == 0);
    CHECK(lines.back().rfind("pooled,-1,", 0) == 0);
}
