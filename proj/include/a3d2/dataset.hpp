#pragma once

#include <optional>

#include "a3d2/image.hpp"
#include "a3d2/tensor.hpp"

namespace a3d2 {

// One video clip: temporally ordered grayscale frames with per-frame masks.
struct Clip {
    std::string id;
    std::vector<Image> frames;
    std::vector<Mask> labels;
    double fps = 0.0;  // 0 = unspecified
};

// Contiguous frame range [begin, end) of one clip.
struct ClipSlice {
    int clip_index = 0;
    int begin = 0;
    int end = 0;

    int length() const { return end - begin; }
};

struct DatasetPartition {
    std::vector<ClipSlice> train;
    std::vector<ClipSlice> test;
    bool test_at_front = false;
};

// Layout: <root>/<clip_id>/frames/00000.png ... plus labels/ twin, optional
// meta.txt with "fps=<float>". Clips sorted by id, frames by filename.
std::vector<Clip> load_dataset(const std::string& root);

// Hard-cut temporal split per clip: round(len/6) frames (min 1) taken
// contiguously from the front or the back; the direction is drawn once per
// run from the seed. Clips shorter than 6 frames are rejected.
DatasetPartition partition(const std::vector<Clip>& clips, uint64_t seed);

// [0..len) -> n copies of the first index, the indices, n copies of the last.
std::vector<int> pad_temporal_indices(int len, int n);

// One window per original frame: sample i covers padded indices [i, i+2n],
// centered on original frame i.
struct WindowSample {
    int center = 0;            // index within the slice
    std::vector<int> window;   // 2n+1 indices within the slice
};
std::vector<WindowSample> window_samples(int len, int n);

// 8-bit frame -> [0,1] float resized with corner-aligned bilinear sampling.
Tensor<float> preprocess_frame(const Image& img, int out_h, int out_w);
// Mask resize keeps labels crisp: nearest-neighbor then re-binarized.
Mask preprocess_mask(const Mask& mask, int out_h, int out_w);
Tensor<float> mask_to_tensor(const Mask& mask);

}  // namespace a3d2
