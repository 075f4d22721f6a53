#include "a3d2/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "a3d2/tensor.hpp"

namespace fs = std::filesystem;

namespace a3d2 {

void PhantomParams::validate() const {
    if (depth < 1) throw std::invalid_argument("phantom: depth must be >= 1");
    if (radius_min <= 0 || radius_max < radius_min) {
        throw std::invalid_argument("phantom: need 0 < radius_min <= radius_max");
    }
    if (front_speed <= 0) throw std::invalid_argument("phantom: front_speed must be > 0");
    if (motion_amplitude < 0) throw std::invalid_argument("phantom: motion_amplitude must be >= 0");
    if (motion_period < 2) throw std::invalid_argument("phantom: motion_period must be >= 2 frames");
    if (noise_std < 0 || noise_signal < 0) throw std::invalid_argument("phantom: noise levels must be >= 0");
    if (background_blobs < 0) throw std::invalid_argument("phantom: background_blobs must be >= 0");
    if (size < 32) throw std::invalid_argument("phantom: size must be >= 32");
    if (frames < 1) throw std::invalid_argument("phantom: frames must be >= 1");
}

namespace {

struct Vec2 {
    double x = 0, y = 0;
};

// Quadratic bezier tube segment with linearly tapering radius.
struct Segment {
    Vec2 p0, c, p1;
    double r0 = 1, r1 = 1;
    double path_offset = 0;  // arclength from tree root to segment start
    double length = 0;
    bool crossing = false;   // belongs to the occlusion vessel, not the tree
};

Vec2 bezier(const Segment& s, double t) {
    const double u = 1.0 - t;
    return {u * u * s.p0.x + 2 * u * t * s.c.x + t * t * s.p1.x,
            u * u * s.p0.y + 2 * u * t * s.c.y + t * t * s.p1.y};
}

double estimate_length(const Segment& s) {
    double len = 0;
    Vec2 prev = s.p0;
    for (int i = 1; i <= 24; ++i) {
        const Vec2 p = bezier(s, i / 24.0);
        len += std::hypot(p.x - prev.x, p.y - prev.y);
        prev = p;
    }
    return len;
}

struct Builder {
    const PhantomParams& p;
    std::mt19937_64 rng;
    std::vector<Segment> segments;
    Vec2 trunk_mid;  // trunk point the crossing vessel aims at

    double uni(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }

    void grow(Vec2 start, double angle, double len, double r, int gen, double offset) {
        const double s = p.size;
        Segment seg;
        seg.p0 = start;
        const double bend = uni(-0.35, 0.35);
        const Vec2 dir{std::sin(angle), std::cos(angle)};
        const Vec2 perp{dir.y, -dir.x};
        seg.p1 = {start.x + dir.x * len, start.y + dir.y * len};
        seg.c = {start.x + dir.x * len * 0.5 + perp.x * bend * len * 0.5,
                 start.y + dir.y * len * 0.5 + perp.y * bend * len * 0.5};
        seg.p1.x = std::clamp(seg.p1.x, 0.03 * s, 0.97 * s);
        seg.p1.y = std::clamp(seg.p1.y, 0.03 * s, 0.97 * s);
        seg.r0 = r;
        seg.r1 = std::max(r * 0.78, p.radius_min);
        seg.path_offset = offset;
        seg.length = estimate_length(seg);
        segments.push_back(seg);
        if (gen >= p.depth) return;
        const int kids = gen == 1 ? 2 : (uni(0, 1) < 0.75 ? 2 : 1);
        const double child_off = offset + seg.length;
        for (int k = 0; k < kids; ++k) {
            const double side = kids == 1 ? uni(-1, 1) : (k == 0 ? -1 : 1);
            double child_angle = angle + side * uni(0.45, 0.95);
            child_angle = std::clamp(child_angle, -1.3, 1.3);  // keep heading downward
            grow(seg.p1, child_angle, len * uni(0.65, 0.85), seg.r1, gen + 1, child_off);
        }
    }

    void build_tree() {
        const double s = p.size;
        const Vec2 start{s * (0.5 + uni(-0.03, 0.03)), s * 0.06};
        grow(start, uni(-0.12, 0.12), s * uni(0.44, 0.52), p.radius_max, 1, 0.0);
        // trunk point at roughly 0.3*size height, anchor for the crossing vessel
        const Segment& trunk = segments.front();
        trunk_mid = bezier(trunk, 0.5);
    }

    // Straight-ish horizontal vessel aimed at the trunk. Its tip slides with
    // the cardiac phase: at phase +1 it reaches past the trunk centerline, at
    // phase -1 it retreats 0.2*size clear of it.
    Segment crossing_at(int frame) const {
        const double s = p.size;
        const double phase = std::sin(2.0 * M_PI * frame / p.motion_period);
        const double tip_x = trunk_mid.x - 0.05 * s + 0.15 * s * phase;
        const double y = trunk_mid.y;
        Segment seg;
        seg.p0 = {tip_x - 0.38 * s, y + 0.02 * s};
        seg.p1 = {tip_x, y};
        seg.c = {(seg.p0.x + seg.p1.x) * 0.5, y - 0.025 * s};
        seg.r0 = seg.r1 = std::clamp(0.6 * p.radius_max, p.radius_min, p.radius_max);
        seg.path_offset = 0;
        seg.length = estimate_length(seg);
        seg.crossing = true;
        return seg;
    }
};

struct FrameCanvas {
    int size;
    std::vector<float> absorption;
    Mask tree_mask, crossing_mask;

    explicit FrameCanvas(int s)
        : size(s), absorption(static_cast<size_t>(s) * s, 0.0f), tree_mask(s, s), crossing_mask(s, s) {}

    void stamp(double cx, double cy, double r, bool crossing) {
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cx + r)));
        const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cy + r)));
        const double r2 = r * r;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                if (d2 > r2) continue;
                // darkest at the tube axis
                const float a = static_cast<float>(90.0 * (1.0 - 0.5 * d2 / r2));
                float& slot = absorption[static_cast<size_t>(y) * size + x];
                slot = std::max(slot, a);
                (crossing ? crossing_mask : tree_mask).at(y, x) = 1;
            }
        }
    }
};

}  // namespace

Clip gen_phantom(const PhantomParams& params, PhantomDebug* debug) {
    params.validate();
    Builder builder{params, std::mt19937_64(params.seed), {}, {}};
    builder.build_tree();
    const int s = params.size;

    // Static background: constant plate, plus smudges and a gradient only when
    // blobs are requested (noise 0 + blobs 0 must leave a perfectly flat field).
    std::vector<float> background(static_cast<size_t>(s) * s, 205.0f);
    if (params.background_blobs > 0) {
        const double grad = builder.uni(-6.0, 6.0);
        struct Blob {
            double cx, cy, amp, sigma2;
        };
        std::vector<Blob> blobs;
        for (int i = 0; i < params.background_blobs; ++i) {
            const double sigma = builder.uni(0.06, 0.18) * s;
            blobs.push_back({builder.uni(0, s), builder.uni(0, s), builder.uni(10.0, 35.0),
                             2.0 * sigma * sigma});
        }
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                double v = 205.0 + grad * (2.0 * y / s - 1.0);
                for (const Blob& b : blobs) {
                    const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
                    v -= b.amp * std::exp(-d2 / b.sigma2);
                }
                background[static_cast<size_t>(y) * s + x] = static_cast<float>(v);
            }
        }
    }

    // Per-branch motion-field wavenumber jitter, drawn once.
    const double wave_k = builder.uni(0.8, 1.4);

    Clip clip;
    clip.id = "phantom";
    clip.fps = 15.0;
    if (debug) {
        debug->tree_area.assign(static_cast<size_t>(params.frames), 0);
        debug->crossing_area.assign(static_cast<size_t>(params.frames), 0);
        debug->overlap_area.assign(static_cast<size_t>(params.frames), 0);
    }

    for (int f = 0; f < params.frames; ++f) {
        FrameCanvas canvas(s);
        const double front = params.front_speed * (f + 1);
        const double phase = 2.0 * M_PI * f / params.motion_period;

        auto render_segment = [&](const Segment& seg) {
            const double visible = std::clamp(front - seg.path_offset, 0.0, seg.length);
            if (visible <= 0) return;
            const int steps = std::max(2, static_cast<int>(std::ceil(seg.length / 0.3)));
            double arc = 0;
            Vec2 prev = bezier(seg, 0.0);
            for (int i = 0; i <= steps; ++i) {
                const double t = static_cast<double>(i) / steps;
                const Vec2 pt = bezier(seg, t);
                if (i > 0) arc += std::hypot(pt.x - prev.x, pt.y - prev.y);
                prev = pt;
                if (arc > visible) break;
                const double r = seg.r0 + (seg.r1 - seg.r0) * t;
                Vec2 moved = pt;
                if (!seg.crossing) {
                    const double sway =
                        params.motion_amplitude * std::sin(phase + wave_k * 2.0 * M_PI * pt.y / s);
                    moved.x += sway;
                    moved.y += 0.4 * sway;
                } else {
                    moved.y += 0.5 * params.motion_amplitude * std::sin(phase + 1.7);
                }
                canvas.stamp(moved.x, moved.y, r, seg.crossing);
            }
        };

        for (const Segment& seg : builder.segments) render_segment(seg);
        if (params.occlusion) render_segment(builder.crossing_at(f));

        Image frame(s, s);
        Mask label(s, s);
        std::mt19937_64 noise_rng(mix_seed(params.seed, 0xA0000 + static_cast<uint64_t>(f)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (size_t i = 0; i < frame.size(); ++i) {
            const double clean = background[i] - canvas.absorption[i];
            double v = clean;
            if (params.noise_std > 0) v += gauss(noise_rng) * params.noise_std;
            if (params.noise_signal > 0) {
                v += gauss(noise_rng) * params.noise_signal * std::sqrt(std::max(clean, 0.0));
            }
            frame.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            label.pixels[i] = (canvas.tree_mask.pixels[i] || canvas.crossing_mask.pixels[i]) ? 1 : 0;
        }
        if (debug) {
            for (size_t i = 0; i < label.size(); ++i) {
                debug->tree_area[static_cast<size_t>(f)] += canvas.tree_mask.pixels[i];
                debug->crossing_area[static_cast<size_t>(f)] += canvas.crossing_mask.pixels[i];
                debug->overlap_area[static_cast<size_t>(f)] +=
                    canvas.tree_mask.pixels[i] && canvas.crossing_mask.pixels[i];
            }
        }
        clip.frames.push_back(std::move(frame));
        clip.labels.push_back(std::move(label));
    }
    return clip;
}

void gen_phantom_dataset(const std::string& root, int n_clips,
                         const PhantomParams& params_template, uint64_t master_seed) {
    if (n_clips < 1) throw std::invalid_argument("gen_phantom_dataset: n_clips must be >= 1");
    params_template.validate();
    fs::create_directories(root);
    for (int i = 0; i < n_clips; ++i) {
        PhantomParams p = params_template;
        p.seed = mix_seed(master_seed, static_cast<uint64_t>(i));
        const Clip clip = gen_phantom(p);
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%03d", i);
        const fs::path dir = fs::path(root) / name;
        fs::create_directories(dir / "frames");
        fs::create_directories(dir / "labels");
        for (size_t f = 0; f < clip.frames.size(); ++f) {
            char fname[32];
            std::snprintf(fname, sizeof(fname), "%05zu.png", f);
            write_png_gray((dir / "frames" / fname).string(), clip.frames[f]);
            write_png_gray((dir / "labels" / fname).string(), mask_to_png8(clip.labels[f]));
        }
        std::ofstream meta(dir / "meta.txt");
        meta << "fps=" << clip.fps << "\n";
    }
}

}  // namespace a3d2
