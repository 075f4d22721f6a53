#pragma once

#include "a3d2/dataset.hpp"

namespace a3d2 {

// Synthetic angiography clip: a branching tube tree filled by an advancing
// contrast front, swaying cyclically over a textured noisy background.
// Labels are the exact contrast-filled tube support of each frame.
struct PhantomParams {
    int depth = 3;                  // branching generations
    double radius_min = 1.5;        // deepest-generation tube radius (px)
    double radius_max = 4.0;        // trunk radius (px)
    double front_speed = 14.0;      // contrast-front advance (px arclength per frame)
    double motion_amplitude = 2.0;  // cardiac sway (px)
    int motion_period = 12;         // frames per cardiac cycle
    double noise_std = 6.0;         // additive gaussian noise (8-bit levels)
    double noise_signal = 0.8;      // signal-dependent noise scale
    int background_blobs = 6;       // dark tissue smudges
    bool occlusion = false;         // add a crossing vessel that overlaps cyclically
    int size = 128;                 // square frame edge (px)
    int frames = 24;
    uint64_t seed = 1;

    void validate() const;
};

// Per-frame pixel counts of the two structures, for the occlusion self-check.
struct PhantomDebug {
    std::vector<int64_t> tree_area;
    std::vector<int64_t> crossing_area;
    std::vector<int64_t> overlap_area;
};

Clip gen_phantom(const PhantomParams& params, PhantomDebug* debug = nullptr);

// Writes n_clips clips in the load_dataset layout, clip seeds derived from
// the master seed.
void gen_phantom_dataset(const std::string& root, int n_clips, const PhantomParams& params_template,
                         uint64_t master_seed);

}  // namespace a3d2
