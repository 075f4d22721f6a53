#include "a3d2/postprocess.hpp"

#include <algorithm>
#include <stdexcept>

namespace a3d2 {

Labeling connected_components(const Mask& mask) {
    const int w = mask.width, h = mask.height;
    Labeling out;
    out.labels.assign(mask.size(), 0);
    std::vector<int32_t> stack;
    int32_t next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (mask.pixels[i] > 1) {
                throw std::invalid_argument("connected_components: mask is not binary");
            }
            if (!mask.pixels[i] || out.labels[i]) continue;
            const int32_t label = ++next;
            int64_t area = 0;
            stack.push_back(static_cast<int32_t>(i));
            out.labels[i] = label;
            while (!stack.empty()) {
                const int32_t cur = stack.back();
                stack.pop_back();
                ++area;
                const int cy = cur / w, cx = cur % w;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int ny = cy + dy;
                    if (ny < 0 || ny >= h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx;
                        if (nx < 0 || nx >= w || (dx == 0 && dy == 0)) continue;
                        const size_t ni = static_cast<size_t>(ny) * w + nx;
                        if (mask.pixels[ni] && !out.labels[ni]) {
                            out.labels[ni] = label;
                            stack.push_back(static_cast<int32_t>(ni));
                        }
                    }
                }
            }
            out.components.push_back({label, area});
        }
    }
    std::sort(out.components.begin(), out.components.end(), [](const Component& a, const Component& b) {
        return a.area != b.area ? a.area > b.area : a.label < b.label;
    });
    return out;
}

Mask postprocess(const Mask& mask, double tau) {
    Labeling lab = connected_components(mask);
    if (lab.components.empty()) return mask;
    const double cutoff = tau * static_cast<double>(lab.components.front().area);
    std::vector<char> keep(lab.components.size() + 1, 0);
    for (const Component& c : lab.components) {
        if (static_cast<double>(c.area) >= cutoff) keep[static_cast<size_t>(c.label)] = 1;
    }
    Mask out(mask.width, mask.height);
    for (size_t i = 0; i < mask.size(); ++i) {
        out.pixels[i] = lab.labels[i] && keep[static_cast<size_t>(lab.labels[i])] ? 1 : 0;
    }
    return out;
}

}  // namespace a3d2
