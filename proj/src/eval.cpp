#include "cats/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "cats/parallel.hpp"

namespace cats {

void EvalConfig::validate() const {
    if (!(tolerance > 0.0)) {
        throw std::invalid_argument("EvalConfig: tolerance must be > 0");
    }
    if (thresholds < 1) {
        throw std::invalid_argument("EvalConfig: need at least one threshold");
    }
    if (!(nms_sigma > 0.0)) {
        throw std::invalid_argument("EvalConfig: nms_sigma must be > 0");
    }
}

FMeasure f_measure(const ThresholdCounts& c) {
    FMeasure f;
    f.precision = (c.tp + c.fp == 0) ? 1.0
                                     : static_cast<double>(c.tp) /
                                           static_cast<double>(c.tp + c.fp);
    f.recall = (c.tp + c.fn == 0) ? 1.0
                                  : static_cast<double>(c.tp) /
                                        static_cast<double>(c.tp + c.fn);
    f.f1 = (f.precision + f.recall == 0.0)
               ? 0.0
               : 2.0 * f.precision * f.recall / (f.precision + f.recall);
    return f;
}

namespace {

Grid gaussian_smooth(const Grid& g, double sigma) {
    const int radius = static_cast<int>(std::lround(2.0 * sigma));
    if (radius < 1) return g;
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    }
    const int h = g.height(), w = g.width();
    // Separable passes with window clipping and per-pixel renormalization.
    Grid rows(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = x + i;
                if (xi < 0 || xi >= w) continue;
                acc += kernel[i + radius] * g.at(y, xi);
                norm += kernel[i + radius];
            }
            rows.at(y, x) = acc / norm;
        }
    }
    Grid out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0, norm = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = y + i;
                if (yi < 0 || yi >= h) continue;
                acc += kernel[i + radius] * rows.at(yi, x);
                norm += kernel[i + radius];
            }
            out.at(y, x) = acc / norm;
        }
    }
    return out;
}

// Bilinear sample with zero outside the image.
double sample_or_zero(const Grid& g, double y, double x) {
    const int h = g.height(), w = g.width();
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double wy = y - y0, wx = x - x0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
            const int yy = y0 + dy, xx = x0 + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double weight = (dy == 0 ? 1.0 - wy : wy) * (dx == 0 ? 1.0 - wx : wx);
            acc += weight * g.at(yy, xx);
        }
    }
    return acc;
}

}  // namespace

Grid zhang_suen_thin(const Grid& mask) {
    if (mask.channels() != 1) {
        throw std::invalid_argument("zhang_suen_thin: mask must be single-channel");
    }
    const int h = mask.height(), w = mask.width();
    std::vector<char> fg(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            fg[static_cast<std::size_t>(y) * w + x] = mask.at(y, x) != 0.0 ? 1 : 0;
        }
    }
    auto at = [&](int y, int x) -> int {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0;
        return fg[static_cast<std::size_t>(y) * w + x];
    };

    std::vector<std::size_t> to_delete;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            to_delete.clear();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (!at(y, x)) continue;
                    // Clockwise neighborhood starting north: p2..p9.
                    const int p2 = at(y - 1, x), p3 = at(y - 1, x + 1);
                    const int p4 = at(y, x + 1), p5 = at(y + 1, x + 1);
                    const int p6 = at(y + 1, x), p7 = at(y + 1, x - 1);
                    const int p8 = at(y, x - 1), p9 = at(y - 1, x - 1);
                    const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (b < 2 || b > 6) continue;
                    const int ring[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
                    int transitions = 0;
                    for (int i = 0; i < 8; ++i) {
                        if (ring[i] == 0 && ring[i + 1] == 1) ++transitions;
                    }
                    if (transitions != 1) continue;
                    if (pass == 0) {
                        if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
                    } else {
                        if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
                    }
                    to_delete.push_back(static_cast<std::size_t>(y) * w + x);
                }
            }
            for (std::size_t idx : to_delete) fg[idx] = 0;
            if (!to_delete.empty()) changed = true;
        }
    }

    Grid out(h, w, 1, 0.0);
    for (std::size_t i = 0; i < fg.size(); ++i) out[i] = fg[i] ? 1.0 : 0.0;
    return out;
}

Grid postprocess(const Grid& pred, const EvalConfig& cfg) {
    cfg.validate();
    if (pred.channels() != 1) {
        throw std::invalid_argument("postprocess: prediction must be single-channel");
    }
    if (pred.min_value() < 0.0 || pred.max_value() > 1.0) {
        throw std::invalid_argument("postprocess: values must lie in [0, 1]");
    }
    const int h = pred.height(), w = pred.width();
    const Grid smooth = gaussian_smooth(pred, cfg.nms_sigma);

    Grid survivors(h, w, 1, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = pred.at(y, x);
            if (v <= 0.0) continue;
            // Orientation from central differences of the smoothed map,
            // replicated at borders.
            const double gx = (smooth.at(y, std::min(x + 1, w - 1)) -
                               smooth.at(y, std::max(x - 1, 0))) * 0.5;
            const double gy = (smooth.at(std::min(y + 1, h - 1), x) -
                               smooth.at(std::max(y - 1, 0), x)) * 0.5;
            const double norm = std::hypot(gx, gy);
            if (norm == 0.0) {
                survivors.at(y, x) = v;
                continue;
            }
            const double uy = gy / norm, ux = gx / norm;
            const double ahead = sample_or_zero(pred, y + uy, x + ux);
            const double behind = sample_or_zero(pred, y - uy, x - ux);
            if (ahead > v || behind > v) continue;  // strictly greater suppresses
            survivors.at(y, x) = v;
        }
    }

    Grid skeleton = zhang_suen_thin(survivors);
    for (std::size_t i = 0; i < skeleton.size(); ++i) {
        skeleton[i] = skeleton[i] != 0.0 ? pred[i] : 0.0;
    }
    return skeleton;
}

int match_radius(int height, int width, double tolerance) {
    const double diagonal = std::sqrt(static_cast<double>(height) * height +
                                      static_cast<double>(width) * width);
    return std::max(1, static_cast<int>(std::floor(tolerance * diagonal + 0.5)));
}

EvalResult summarize(std::vector<std::vector<ThresholdCounts>> per_image,
                     std::vector<double> thresholds) {
    if (per_image.empty()) {
        throw std::invalid_argument("summarize: empty dataset");
    }
    const std::size_t n_thresholds = thresholds.size();
    for (const auto& row : per_image) {
        if (row.size() != n_thresholds) {
            throw std::invalid_argument("summarize: ragged count table");
        }
    }
    EvalResult result;
    result.thresholds = std::move(thresholds);
    result.per_image = std::move(per_image);

    result.totals.assign(n_thresholds, ThresholdCounts{});
    for (const auto& row : result.per_image) {
        for (std::size_t t = 0; t < n_thresholds; ++t) {
            result.totals[t].tp += row[t].tp;
            result.totals[t].fp += row[t].fp;
            result.totals[t].fn += row[t].fn;
        }
    }
    result.curve.resize(n_thresholds);
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < n_thresholds; ++t) {
        result.curve[t] = f_measure(result.totals[t]);
        if (result.curve[t].f1 > result.curve[best_t].f1) best_t = t;
    }
    result.ods_threshold = result.thresholds[best_t];
    result.ods = result.curve[best_t];

    ThresholdCounts ois_counts;
    for (const auto& row : result.per_image) {
        std::size_t best = 0;
        double best_f = f_measure(row[0]).f1;
        for (std::size_t t = 1; t < n_thresholds; ++t) {
            const double f = f_measure(row[t]).f1;
            if (f > best_f) {
                best_f = f;
                best = t;
            }
        }
        ois_counts.tp += row[best].tp;
        ois_counts.fp += row[best].fp;
        ois_counts.fn += row[best].fn;
    }
    result.ois = f_measure(ois_counts);
    return result;
}

EvalResult evaluate(const std::vector<Grid>& predictions,
                    const std::vector<EdgeLabel>& labels, const EvalConfig& cfg,
                    int jobs) {
    cfg.validate();
    if (predictions.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("evaluate: prediction/label count mismatch");
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].height() != labels[i].consensus.height() ||
            predictions[i].width() != labels[i].consensus.width()) {
            throw std::invalid_argument("evaluate: resolution mismatch at image " +
                                        std::to_string(i));
        }
    }

    std::vector<double> thresholds(cfg.thresholds);
    for (int t = 0; t < cfg.thresholds; ++t) {
        thresholds[t] = static_cast<double>(t + 1) / (cfg.thresholds + 1);
    }

    const int n = static_cast<int>(predictions.size());
    std::vector<std::vector<ThresholdCounts>> per_image(n);
    parallel_for(n, jobs, [&](int i) {
        const Grid map = cfg.protocol == Protocol::kStandard
                             ? postprocess(predictions[i], cfg)
                             : predictions[i];
        const double radius =
            match_radius(map.height(), map.width(), cfg.tolerance);
        const auto& gt = labels[i].edge_points;
        auto& counts = per_image[i];
        counts.resize(thresholds.size());
        std::vector<PixelCoord> pred_pixels;
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            pred_pixels.clear();
            for (int y = 0; y < map.height(); ++y) {
                for (int x = 0; x < map.width(); ++x) {
                    if (map.at(y, x) >= thresholds[t]) pred_pixels.push_back({y, x});
                }
            }
            const MatchResult m = correspond(pred_pixels, gt, radius);
            counts[t] = {m.tp, m.fp, m.fn};
        }
    });
    return summarize(std::move(per_image), std::move(thresholds));
}

void write_pr_csv(const EvalResult& result, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_pr_csv: cannot open " + path.string());
    os << "threshold,TP,FP,FN,P,R,F\n";
    char line[256];
    for (std::size_t t = 0; t < result.thresholds.size(); ++t) {
        std::snprintf(line, sizeof(line), "%.6f,%ld,%ld,%ld,%.9f,%.9f,%.9f\n",
                      result.thresholds[t], result.totals[t].tp, result.totals[t].fp,
                      result.totals[t].fn, result.curve[t].precision,
                      result.curve[t].recall, result.curve[t].f1);
        os << line;
    }
    std::snprintf(line, sizeof(line), "ODS,%.6f,,,%.9f,%.9f,%.9f\n",
                  result.ods_threshold, result.ods.precision, result.ods.recall,
                  result.ods.f1);
    os << line;
    std::snprintf(line, sizeof(line), "OIS,,,,%.9f,%.9f,%.9f\n", result.ois.precision,
                  result.ois.recall, result.ois.f1);
    os << line;
    if (!os) throw std::runtime_error("write_pr_csv: write failed for " + path.string());
}

}  // namespace cats
