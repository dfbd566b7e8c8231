#include "cats/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cats/label.hpp"
#include "cats/pgm.hpp"
#include "cats/rng.hpp"

namespace cats {

namespace {

constexpr int kShapeMargin = 2;   // pixels between any shape and the border
constexpr int kMinExtent = 8;
constexpr int kMaxExtentCap = 18;
constexpr double kMinContrast = 0.25;

struct BBox {
    int y0, x0, y1, x1;  // inclusive

    bool intersects(const BBox& o) const {
        return !(y1 < o.y0 || o.y1 < y0 || x1 < o.x0 || o.x1 < x0);
    }
    BBox inflated(int m) const { return {y0 - m, x0 - m, y1 + m, x1 + m}; }
};

struct Shape {
    enum class Kind { kRect, kCircle, kTriangle };
    Kind kind;
    BBox box;
    // circle
    int cy = 0, cx = 0, radius = 0;
    // triangle vertices
    int vy[3] = {0, 0, 0}, vx[3] = {0, 0, 0};

    bool inside(int y, int x) const {
        switch (kind) {
            case Kind::kRect:
                return y >= box.y0 && y <= box.y1 && x >= box.x0 && x <= box.x1;
            case Kind::kCircle: {
                const long dy = y - cy, dx = x - cx;
                return dy * dy + dx * dx <= static_cast<long>(radius) * radius;
            }
            case Kind::kTriangle: {
                // Point-in-triangle by consistent cross-product signs,
                // boundary inclusive. Vertices are wound counter-clockwise.
                long s[3];
                for (int i = 0; i < 3; ++i) {
                    const int j = (i + 1) % 3;
                    s[i] = static_cast<long>(vx[j] - vx[i]) * (y - vy[i]) -
                           static_cast<long>(vy[j] - vy[i]) * (x - vx[i]);
                }
                return (s[0] >= 0 && s[1] >= 0 && s[2] >= 0) ||
                       (s[0] <= 0 && s[1] <= 0 && s[2] <= 0);
            }
        }
        return false;
    }
};

struct Texture {
    enum class Kind { kFlat, kSinusoid, kChecker };
    Kind kind = Kind::kFlat;
    double base = 0.5;
    double amplitude = 0.0;
    int period = 4;
    double angle = 0.0;
    double phase = 0.0;

    double value_at(int y, int x) const {
        switch (kind) {
            case Kind::kFlat:
                return base;
            case Kind::kSinusoid:
                return base + 0.5 * amplitude *
                                  std::sin(2.0 * M_PI *
                                               (x * std::cos(angle) + y * std::sin(angle)) /
                                               period +
                                           phase);
            case Kind::kChecker:
                return base + (((x / period + y / period) % 2 == 0) ? 0.5 : -0.5) *
                                  amplitude;
        }
        return base;
    }
};

Shape sample_shape(Rng& rng, int size, int ext_max) {
    Shape s;
    const int kind = rng.uniform_int(0, 2);
    const int lo = kShapeMargin;
    if (kind == 0 || kind == 2) {
        const int h_ext = rng.uniform_int(kMinExtent, ext_max);
        const int w_ext = rng.uniform_int(kMinExtent, ext_max);
        const int y0 = rng.uniform_int(lo, size - 1 - kShapeMargin - (h_ext - 1));
        const int x0 = rng.uniform_int(lo, size - 1 - kShapeMargin - (w_ext - 1));
        s.box = {y0, x0, y0 + h_ext - 1, x0 + w_ext - 1};
        if (kind == 0) {
            s.kind = Shape::Kind::kRect;
        } else {
            s.kind = Shape::Kind::kTriangle;
            const int apex_x = s.box.x0 + rng.uniform_int(0, w_ext - 1);
            const bool flipped = rng.uniform_int(0, 1) == 1;
            if (!flipped) {
                // Apex on the top edge, base along the bottom.
                s.vy[0] = s.box.y0; s.vx[0] = apex_x;
                s.vy[1] = s.box.y1; s.vx[1] = s.box.x1;
                s.vy[2] = s.box.y1; s.vx[2] = s.box.x0;
            } else {
                s.vy[0] = s.box.y1; s.vx[0] = apex_x;
                s.vy[1] = s.box.y0; s.vx[1] = s.box.x0;
                s.vy[2] = s.box.y0; s.vx[2] = s.box.x1;
            }
        }
    } else {
        s.kind = Shape::Kind::kCircle;
        s.radius = rng.uniform_int(kMinExtent / 2, ext_max / 2);
        s.cy = rng.uniform_int(lo + s.radius, size - 1 - kShapeMargin - s.radius);
        s.cx = rng.uniform_int(lo + s.radius, size - 1 - kShapeMargin - s.radius);
        s.box = {s.cy - s.radius, s.cx - s.radius, s.cy + s.radius, s.cx + s.radius};
    }
    return s;
}

Texture sample_texture(Rng& rng, double base, double amp_max, int period_min,
                       int period_max) {
    Texture t;
    t.base = base;
    const int kind = rng.uniform_int(0, 2);
    t.kind = kind == 0 ? Texture::Kind::kFlat
                       : (kind == 1 ? Texture::Kind::kSinusoid : Texture::Kind::kChecker);
    t.amplitude = rng.uniform(0.0, amp_max);
    t.period = rng.uniform_int(period_min, period_max);
    t.angle = rng.uniform(0.0, M_PI);
    t.phase = rng.uniform(0.0, 2.0 * M_PI);
    return t;
}

}  // namespace

void SynthSpec::validate() const {
    if (image_size < 4) throw std::invalid_argument("SynthSpec: image_size too small");
    if (num_images < 1) throw std::invalid_argument("SynthSpec: num_images must be >= 1");
    if (min_shapes < 1 || max_shapes < min_shapes) {
        throw std::invalid_argument("SynthSpec: invalid shape count range");
    }
    if (annotators < 1) throw std::invalid_argument("SynthSpec: annotators must be >= 1");
    if (annotator_jitter < 0) {
        throw std::invalid_argument("SynthSpec: annotator_jitter must be >= 0");
    }
    if (texture_amplitude_max < 0.0 || texture_amplitude_max > 0.4) {
        throw std::invalid_argument("SynthSpec: texture amplitude must lie in [0, 0.4]");
    }
    if (texture_period_min < 2 || texture_period_max < texture_period_min) {
        throw std::invalid_argument("SynthSpec: texture period range invalid");
    }
    const int ext_max = std::min(kMaxExtentCap, image_size - 1 - 2 * kShapeMargin);
    if (ext_max < kMinExtent) {
        throw std::invalid_argument(
            "SynthSpec: image_size " + std::to_string(image_size) +
            " cannot fit any shape (needs at least " +
            std::to_string(kMinExtent + 2 * kShapeMargin + 1) + ")");
    }
}

std::vector<SynthSample> generate(const SynthSpec& spec) {
    spec.validate();
    const int size = spec.image_size;
    const int ext_max = std::min(kMaxExtentCap, size - 1 - 2 * kShapeMargin);
    Rng root(spec.seed);

    std::vector<SynthSample> samples;
    samples.reserve(spec.num_images);
    for (int index = 0; index < spec.num_images; ++index) {
        Rng rng = root.split(static_cast<std::uint64_t>(index));

        const int want = rng.uniform_int(spec.min_shapes, spec.max_shapes);
        std::vector<Shape> shapes;
        for (int s = 0; s < want; ++s) {
            bool placed = false;
            for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
                Shape candidate = sample_shape(rng, size, ext_max);
                const BBox inflated = candidate.box.inflated(2);
                placed = std::none_of(shapes.begin(), shapes.end(), [&](const Shape& o) {
                    return inflated.intersects(o.box);
                });
                if (placed) shapes.push_back(candidate);
            }
            if (!placed) {
                throw std::invalid_argument(
                    "generate: cannot place " + std::to_string(want) +
                    " shapes in a " + std::to_string(size) + "px image");
            }
        }

        // Region ids: 0 background, 1..n shapes (shapes never overlap).
        std::vector<int> region(static_cast<std::size_t>(size) * size, 0);
        for (std::size_t s = 0; s < shapes.size(); ++s) {
            const Shape& sh = shapes[s];
            for (int y = sh.box.y0; y <= sh.box.y1; ++y) {
                for (int x = sh.box.x0; x <= sh.box.x1; ++x) {
                    if (sh.inside(y, x)) {
                        region[static_cast<std::size_t>(y) * size + x] =
                            static_cast<int>(s) + 1;
                    }
                }
            }
        }

        // Textures: background first, then one per shape with guaranteed
        // contrast against the background.
        const double bg_base = rng.uniform(0.15, 0.85);
        std::vector<Texture> textures;
        textures.push_back(sample_texture(rng, bg_base, spec.texture_amplitude_max,
                                          spec.texture_period_min,
                                          spec.texture_period_max));
        for (std::size_t s = 0; s < shapes.size(); ++s) {
            const double offset = rng.uniform(kMinContrast, 0.45);
            const bool up_ok = bg_base + offset <= 0.95;
            const bool down_ok = bg_base - offset >= 0.05;
            double base;
            if (up_ok && down_ok) {
                base = rng.uniform_int(0, 1) == 0 ? bg_base + offset : bg_base - offset;
            } else {
                base = up_ok ? bg_base + offset : bg_base - offset;
            }
            textures.push_back(sample_texture(rng, base, spec.texture_amplitude_max,
                                              spec.texture_period_min,
                                              spec.texture_period_max));
        }

        SynthSample sample;
        sample.image = Grid(size, size, 1);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const int id = region[static_cast<std::size_t>(y) * size + x];
                sample.image.at(y, x) =
                    std::clamp(textures[id].value_at(y, x), 0.0, 1.0);
            }
        }

        // Per-shape boundary pixels: inside pixels touching another region,
        // then a cleanup pass so no 2x2 block is fully marked.
        std::vector<std::vector<PixelCoord>> edges(shapes.size());
        std::vector<char> edge_map(static_cast<std::size_t>(size) * size, 0);
        auto region_at = [&](int y, int x) {
            return region[static_cast<std::size_t>(y) * size + x];
        };
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const int id = region_at(y, x);
                if (id == 0) continue;
                const bool boundary =
                    (y > 0 && region_at(y - 1, x) != id) ||
                    (y + 1 < size && region_at(y + 1, x) != id) ||
                    (x > 0 && region_at(y, x - 1) != id) ||
                    (x + 1 < size && region_at(y, x + 1) != id);
                if (boundary) edge_map[static_cast<std::size_t>(y) * size + x] = 1;
            }
        }
        bool changed = true;
        while (changed) {
            changed = false;
            for (int y = 0; y + 1 < size; ++y) {
                for (int x = 0; x + 1 < size; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * size + x;
                    if (edge_map[i] && edge_map[i + 1] && edge_map[i + size] &&
                        edge_map[i + size + 1]) {
                        edge_map[i + size + 1] = 0;
                        changed = true;
                    }
                }
            }
        }
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                if (edge_map[static_cast<std::size_t>(y) * size + x]) {
                    edges[region_at(y, x) - 1].push_back({y, x});
                }
            }
        }

        // Simulated annotators: each stamps every shape boundary with its own
        // integer offset; consensus is the marking fraction per pixel.
        std::vector<int> counts(static_cast<std::size_t>(size) * size, 0);
        std::vector<char> marked(static_cast<std::size_t>(size) * size, 0);
        for (int a = 0; a < spec.annotators; ++a) {
            std::fill(marked.begin(), marked.end(), 0);
            for (std::size_t s = 0; s < shapes.size(); ++s) {
                const int dy = rng.uniform_int(-spec.annotator_jitter, spec.annotator_jitter);
                const int dx = rng.uniform_int(-spec.annotator_jitter, spec.annotator_jitter);
                for (const auto& p : edges[s]) {
                    const int y = p.y + dy, x = p.x + dx;
                    if (y >= 0 && y < size && x >= 0 && x < size) {
                        marked[static_cast<std::size_t>(y) * size + x] = 1;
                    }
                }
            }
            for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += marked[i];
        }
        sample.consensus = Grid(size, size, 1);
        for (std::size_t i = 0; i < counts.size(); ++i) {
            sample.consensus[i] =
                static_cast<double>(counts[i]) / static_cast<double>(spec.annotators);
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

void write_dataset(const std::vector<SynthSample>& samples, const SynthSpec& spec,
                   const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "labels");
    char name[16];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(name, sizeof(name), "%04zu.pgm", i);
        write_pgm(samples[i].image, out_dir / "images" / name);
        write_pgm(samples[i].consensus, out_dir / "labels" / name);
    }
    nlohmann::json manifest = {
        {"image_size", spec.image_size},
        {"num_images", spec.num_images},
        {"min_shapes", spec.min_shapes},
        {"max_shapes", spec.max_shapes},
        {"annotators", spec.annotators},
        {"annotator_jitter", spec.annotator_jitter},
        {"texture_amplitude_max", spec.texture_amplitude_max},
        {"texture_period_min", spec.texture_period_min},
        {"texture_period_max", spec.texture_period_max},
        {"seed", spec.seed},
    };
    std::ofstream os(out_dir / "manifest.json");
    if (!os) {
        throw std::runtime_error("write_dataset: cannot write manifest in " +
                                 out_dir.string());
    }
    os << manifest.dump(2) << "\n";
}

std::vector<std::filesystem::path> list_pgm_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("list_pgm_files: " + dir.string() +
                                 " is not a directory");
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<SynthSample> load_dataset(const std::filesystem::path& dir) {
    const auto images = list_pgm_files(dir / "images");
    const auto labels = list_pgm_files(dir / "labels");
    if (images.size() != labels.size()) {
        throw std::runtime_error("load_dataset: image/label count mismatch in " +
                                 dir.string());
    }
    std::vector<SynthSample> samples;
    samples.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].filename() != labels[i].filename()) {
            throw std::runtime_error("load_dataset: image/label name mismatch: " +
                                     images[i].filename().string() + " vs " +
                                     labels[i].filename().string());
        }
        samples.push_back({read_pgm(images[i]), read_pgm(labels[i])});
    }
    return samples;
}

}  // namespace cats
