#include <doctest.h>

#include <filesystem>
#include <unistd.h>
#include <fstream>

#include "a3d2/checkpoint.hpp"
#include "a3d2/pipeline.hpp"

using namespace a3d2;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config(int n = 1) {
    ModelConfig cfg;
    cfg.n = n;
    cfg.height = cfg.width = 64;
    cfg.base_channels = 8;
    cfg.seed = 11;
    return cfg;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("a3d2_test_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

}  // namespace

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
    TempDir tmp;
    const ModelConfig cfg = tiny_config();
    const auto params = build_network<float>(cfg);
    const std::string p1 = (tmp.path / "a.a3d2").string();
    const std::string p2 = (tmp.path / "b.a3d2").string();
    save_checkpoint(params, cfg, p1);
    LoadedCheckpoint loaded = load_checkpoint(p1);
    CHECK(loaded.config.n == cfg.n);
    CHECK(loaded.config.height == cfg.height);
    CHECK(loaded.config.base_channels == cfg.base_channels);
    save_checkpoint(loaded.params, loaded.config, p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoint: cross-N load is rejected by consumers") {
    TempDir tmp;
    const ModelConfig cfg2 = tiny_config(2);
    const auto params = build_network<float>(cfg2);
    const std::string path = (tmp.path / "n2.a3d2").string();
    save_checkpoint(params, cfg2, path);

    LoadedCheckpoint ck = load_checkpoint(path);
    CHECK(ck.config.n == 2);
    Clip clip;
    clip.frames.assign(4, Image(64, 64, 100));
    CHECK_THROWS_WITH_AS((void)segment_video(ck.params, clip, 1), doctest::Contains("N=2"),
                         std::invalid_argument);

    TrainConfig tc;
    tc.n = 1;
    tc.height = tc.width = 64;
    tc.init_checkpoint = path;
    std::vector<Clip> clips(1);
    clips[0].id = "c";
    clips[0].frames.assign(8, Image(64, 64, 100));
    clips[0].labels.assign(8, Mask(64, 64));
    CHECK_THROWS_WITH_AS((void)train(tc, clips), doctest::Contains("N=2"), std::invalid_argument);
}

TEST_CASE("checkpoint: corrupt files give distinct errors") {
    TempDir tmp;
    const ModelConfig cfg = tiny_config();
    const auto params = build_network<float>(cfg);
    const std::string good = (tmp.path / "good.a3d2").string();
    save_checkpoint(params, cfg, good);
    const std::vector<char> bytes = slurp(good);

    const std::string bad_magic = (tmp.path / "bad_magic.a3d2").string();
    {
        std::vector<char> b = bytes;
        b[0] = 'X';
        std::ofstream(bad_magic, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    }
    CHECK_THROWS_WITH_AS((void)load_checkpoint(bad_magic), doctest::Contains("bad magic"),
                         std::runtime_error);

    const std::string bad_version = (tmp.path / "bad_version.a3d2").string();
    {
        std::vector<char> b = bytes;
        b[4] = 9;
        std::ofstream(bad_version, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    }
    CHECK_THROWS_WITH_AS((void)load_checkpoint(bad_version), doctest::Contains("version"),
                         std::runtime_error);

    const std::string truncated = (tmp.path / "truncated.a3d2").string();
    std::ofstream(truncated, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    CHECK_THROWS_WITH_AS((void)load_checkpoint(truncated), doctest::Contains("truncated"),
                         std::runtime_error);

    CHECK_THROWS_AS((void)load_checkpoint((tmp.path / "missing.a3d2").string()), std::runtime_error);
}

TEST_CASE("checkpoint: tensor set must close under the architecture") {
    TempDir tmp;
    ModelConfig cfg = tiny_config();
    auto params = build_network<float>(cfg);
    // config claims N=2 but tensors are the N=1 set
    cfg.n = 2;
    const std::string path = (tmp.path / "mismatch.a3d2").string();
    CHECK_THROWS_WITH_AS(save_checkpoint(params, cfg, path), doctest::Contains("shape mismatch"),
                         std::runtime_error);
}
