#include "a3d2/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "a3d2/ops.hpp"

namespace fs = std::filesystem;

namespace a3d2 {

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<Clip> load_dataset(const std::string& root) {
    if (!fs::exists(root) || !fs::is_directory(root)) {
        throw std::runtime_error("dataset root '" + root + "' is not a directory");
    }
    std::vector<fs::path> clip_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) clip_dirs.push_back(e.path());
    }
    std::sort(clip_dirs.begin(), clip_dirs.end());
    if (clip_dirs.empty()) {
        std::cerr << "warning: dataset root '" << root << "' contains no clips\n";
        return {};
    }

    std::vector<Clip> clips;
    for (const fs::path& dir : clip_dirs) {
        Clip clip;
        clip.id = dir.filename().string();
        const fs::path frames_dir = dir / "frames";
        const fs::path labels_dir = dir / "labels";
        if (!fs::is_directory(frames_dir) || !fs::is_directory(labels_dir)) {
            throw std::runtime_error("clip '" + clip.id + "': missing frames/ or labels/ directory");
        }
        const auto frame_files = sorted_pngs(frames_dir);
        const auto label_files = sorted_pngs(labels_dir);
        if (frame_files.size() != label_files.size()) {
            throw std::runtime_error("clip '" + clip.id + "': " +
                                     std::to_string(frame_files.size()) + " frames but " +
                                     std::to_string(label_files.size()) + " labels");
        }
        for (size_t i = 0; i < frame_files.size(); ++i) {
            Image frame = read_png_gray(frame_files[i].string());
            Mask label = png8_to_mask(read_png_gray(label_files[i].string()));
            if (!clip.frames.empty() && (frame.width != clip.frames.front().width ||
                                         frame.height != clip.frames.front().height)) {
                throw std::runtime_error("clip '" + clip.id + "': mixed frame resolutions");
            }
            if (label.width != frame.width || label.height != frame.height) {
                throw std::runtime_error("clip '" + clip.id + "': label resolution differs from frame " +
                                         frame_files[i].filename().string());
            }
            clip.frames.push_back(std::move(frame));
            clip.labels.push_back(std::move(label));
        }
        const fs::path meta = dir / "meta.txt";
        if (fs::exists(meta)) {
            std::ifstream is(meta);
            std::string line;
            while (std::getline(is, line)) {
                if (line.rfind("fps=", 0) == 0) clip.fps = std::stod(line.substr(4));
            }
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

DatasetPartition partition(const std::vector<Clip>& clips, uint64_t seed) {
    DatasetPartition part;
    std::mt19937_64 rng(mix_seed(seed, 0x9a27));
    part.test_at_front = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
    for (size_t ci = 0; ci < clips.size(); ++ci) {
        const int len = static_cast<int>(clips[ci].frames.size());
        if (len < 6) {
            throw std::runtime_error("clip '" + clips[ci].id + "' has " + std::to_string(len) +
                                     " frames; the 1/6 partition needs at least 6");
        }
        const int test_len = std::max(1, static_cast<int>(std::llround(len / 6.0)));
        const int idx = static_cast<int>(ci);
        if (part.test_at_front) {
            part.test.push_back({idx, 0, test_len});
            part.train.push_back({idx, test_len, len});
        } else {
            part.train.push_back({idx, 0, len - test_len});
            part.test.push_back({idx, len - test_len, len});
        }
    }
    return part;
}

std::vector<int> pad_temporal_indices(int len, int n) {
    if (len < 1) throw std::invalid_argument("pad_temporal: empty slice");
    if (n < 0) throw std::invalid_argument("pad_temporal: negative N");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(len + 2 * n));
    for (int i = 0; i < n; ++i) out.push_back(0);
    for (int i = 0; i < len; ++i) out.push_back(i);
    for (int i = 0; i < n; ++i) out.push_back(len - 1);
    return out;
}

std::vector<WindowSample> window_samples(int len, int n) {
    const std::vector<int> padded = pad_temporal_indices(len, n);
    std::vector<WindowSample> out;
    out.reserve(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) {
        WindowSample s;
        s.center = i;
        s.window.assign(padded.begin() + i, padded.begin() + i + 2 * n + 1);
        out.push_back(std::move(s));
    }
    return out;
}

Tensor<float> preprocess_frame(const Image& img, int out_h, int out_w) {
    if (img.width < 1 || img.height < 1 || img.pixels.empty()) {
        throw std::invalid_argument("preprocess: empty image");
    }
    Tensor<float> t({1, 1, img.height, img.width});
    for (size_t i = 0; i < img.size(); ++i) t.data[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    Tensor<float> r = upsample_bilinear_forward(t, out_h, out_w);
    return Tensor<float>({out_h, out_w}, std::move(r.data));
}

Mask preprocess_mask(const Mask& mask, int out_h, int out_w) {
    if (mask.width < 1 || mask.height < 1) throw std::invalid_argument("preprocess: empty mask");
    Mask out(out_w, out_h);
    const double sy = out_h > 1 ? static_cast<double>(mask.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(mask.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const int iy = std::min(mask.height - 1, static_cast<int>(std::lround(y * sy)));
        for (int x = 0; x < out_w; ++x) {
            const int ix = std::min(mask.width - 1, static_cast<int>(std::lround(x * sx)));
            out.at(y, x) = mask.at(iy, ix) ? 1 : 0;
        }
    }
    return out;
}

Tensor<float> mask_to_tensor(const Mask& mask) {
    Tensor<float> t({mask.height, mask.width});
    for (size_t i = 0; i < mask.size(); ++i) t.data[i] = mask.pixels[i] ? 1.0f : 0.0f;
    return t;
}

}  // namespace a3d2
