#pragma once

#include <filesystem>
#include <vector>

#include "cats/label.hpp"
#include "cats/matching.hpp"

namespace cats {

enum class Protocol { kStandard, kCrisp };

struct EvalConfig {
    // Match tolerance as a fraction of the image diagonal (0.0075 BSDS-style,
    // 0.011 NYUDv2-style).
    double tolerance = 0.0075;
    int thresholds = 99;  // uniform in (0, 1)
    Protocol protocol = Protocol::kStandard;
    double nms_sigma = 1.0;  // Gaussian pre-smoothing for orientation

    void validate() const;
};

struct ThresholdCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct FMeasure {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Precision 1 when nothing is predicted, recall 1 when there is no ground
// truth, F 0 when P + R == 0; keeps PR curves total.
FMeasure f_measure(const ThresholdCounts& counts);

struct EvalResult {
    std::vector<double> thresholds;
    std::vector<std::vector<ThresholdCounts>> per_image;  // [image][threshold]
    std::vector<ThresholdCounts> totals;                  // per threshold
    std::vector<FMeasure> curve;                          // per threshold

    double ods_threshold = 0.0;
    FMeasure ods;
    FMeasure ois;
};

// Gaussian smoothing (orientation only), suppression of pixels beaten by a
// bilinear-interpolated neighbor along the gradient direction, then
// Zhang-Suen thinning of the surviving support with original responses kept.
Grid postprocess(const Grid& pred, const EvalConfig& cfg);

// Zhang-Suen skeleton of a binary mask (any nonzero is foreground).
Grid zhang_suen_thin(const Grid& mask);

// Y+ pixels of the label grid for matching, plus the match radius rule.
int match_radius(int height, int width, double tolerance);

// The full protocol: optional post-processing, threshold sweep, one-to-one
// matching against Y+, and ODS/OIS summaries. F ties resolve to the lower
// threshold.
EvalResult evaluate(const std::vector<Grid>& predictions,
                    const std::vector<EdgeLabel>& labels, const EvalConfig& cfg,
                    int jobs = 1);

// ODS/OIS from already-aggregated per-image per-threshold counts.
EvalResult summarize(std::vector<std::vector<ThresholdCounts>> per_image,
                     std::vector<double> thresholds);

// threshold,TP,FP,FN,P,R,F rows, then ODS/OIS summary lines.
void write_pr_csv(const EvalResult& result, const std::filesystem::path& path);

}  // namespace cats
