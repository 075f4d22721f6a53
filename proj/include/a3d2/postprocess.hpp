#pragma once

#include "a3d2/image.hpp"

namespace a3d2 {

struct Component {
    int32_t label = 0;
    int64_t area = 0;
};

struct Labeling {
    std::vector<int32_t> labels;           // 0 = background, 1..K = components
    std::vector<Component> components;     // sorted by area desc, then label asc
};

// 8-connected component labeling over a binary mask.
Labeling connected_components(const Mask& mask);

// Drop every component with area < tau * largest-component area.
Mask postprocess(const Mask& mask, double tau = 0.05);

}  // namespace a3d2
