#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cats/grid.hpp"

namespace cats {

// Deterministic synthetic scenes: textured convex shapes (rectangles, disks,
// triangles) on a textured background, exact 1-px rasterized boundaries as
// ground truth, and a simulated multi-annotator consensus obtained by
// stamping each shape boundary with independent integer jitter per annotator.
struct SynthSpec {
    int image_size = 64;
    int num_images = 1;
    int min_shapes = 1;
    int max_shapes = 4;
    int annotators = 5;
    int annotator_jitter = 1;  // max offset in pixels, per axis
    double texture_amplitude_max = 0.4;
    int texture_period_min = 2;
    int texture_period_max = 6;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthSample {
    Grid image;      // H x W x 1, values in [0, 1]
    Grid consensus;  // H x W x 1, values in {0, 1/annotators, ..., 1}
};

std::vector<SynthSample> generate(const SynthSpec& spec);

// Layout: out_dir/images/NNNN.pgm, out_dir/labels/NNNN.pgm (consensus x255),
// out_dir/manifest.json recording the spec.
void write_dataset(const std::vector<SynthSample>& samples, const SynthSpec& spec,
                   const std::filesystem::path& out_dir);

std::vector<SynthSample> load_dataset(const std::filesystem::path& dir);

// Sorted NNNN.pgm paths of one dataset subdirectory.
std::vector<std::filesystem::path> list_pgm_files(const std::filesystem::path& dir);

}  // namespace cats
