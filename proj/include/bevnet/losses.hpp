#pragma once

#include <cstdint>
#include <optional>

#include "bevnet/bev.hpp"
#include "bevnet/sparse_map.hpp"

namespace bevnet {

// Raised when two clouds share no correspondence under the sampling radii.
struct NoOverlapError : Error {
    using Error::Error;
};

struct LossRadii {
    double r_pos = 0;   // positive radius
    double r_safe = 0;  // safe (negative) radius, > r_pos

    static LossRadii from_cell_size(double cell) { return {1.5 * cell, 3.0 * cell}; }
};

struct CircleParams {
    double delta_p = 0.1;
    double delta_n = 1.4;
    double scale = 10.0;  // circle-loss weighting factor

    void validate() const {
        if (!(delta_p > 0 && delta_p < delta_n && scale > 0))
            throw ConfigError("CircleParams: require 0 < delta_p < delta_n and scale > 0");
    }
};

// Anchor row in cloud A with positive/negative rows in cloud B. The matched
// positive is the spatially nearest one.
struct CorrespondenceSample {
    int anchor = -1;
    int matched = -1;
    std::vector<int> positives;
    std::vector<int> negatives;
};

struct SamplerConfig {
    int max_anchors = 128;
    int max_negatives = 32;
    LossRadii radii;
    std::uint64_t seed = 0;
};

// points_b must already be in A's frame. Deterministic given the seed.
// Throws NoOverlapError when no anchor has a positive.
std::vector<CorrespondenceSample> sample_correspondences(
    const std::vector<Eigen::Vector3d>& points_a, const std::vector<Eigen::Vector3d>& points_b,
    const SamplerConfig& cfg);

// Adaptive per-sample circle-loss weights (clamped margin violations),
// detached from the graph. A training step records them so a frozen replay
// (and a finite-difference probe) sees the same smooth objective the analytic
// gradient was computed against.
struct CircleWeights {
    std::vector<double> pos, neg;  // flattened in sample order
};

// One direction of the descriptor circle loss; anchors index rows of feat_a,
// positives/negatives rows of feat_b. Distances are row Euclidean distances.
// Per-sample exponents are scale * w * (d - margin) with detached weights
// w = [d - delta_p]+ (positives) and [delta_n - d]+ (negatives); the result
// is normalized by 1/scale. Weights are recomputed unless `reuse` is given.
TensorRef circle_loss(Tape& tape, TensorRef feat_a, TensorRef feat_b,
                      const std::vector<CorrespondenceSample>& samples, const CircleParams& params,
                      const CircleWeights* reuse = nullptr, CircleWeights* record = nullptr);

// Mean over anchors of (d_pos - d_neg) * (score_a + score_b); d_neg is the
// hardest (minimum) negative distance.
TensorRef detection_loss(Tape& tape, TensorRef desc_a, TensorRef desc_b,
                         const std::vector<CorrespondenceSample>& samples, TensorRef score_a,
                         TensorRef score_b);

// Nearest counterpart (within r_corr, -1 when none) for each regressed point
// of A, evaluated at the given heights. Separated out so a training step can
// freeze this discrete choice while gradients flow through the heights.
std::vector<int> regression_correspondents(const Eigen::VectorXd& z_a,
                                           const std::vector<Eigen::Vector2d>& xy_a,
                                           const Eigen::VectorXd& z_b,
                                           const std::vector<Eigen::Vector2d>& xy_b,
                                           const RigidTransform& b_to_a, double r_corr);

// One direction of the height regression loss with fixed correspondents. xy
// are the cell centers of the regressed points; raw is the original cloud of
// the same frame. The second term compares against the corresponding regressed
// point of the counterpart cloud transformed into this frame and is dropped
// where corr is -1.
TensorRef regression_loss_dir(Tape& tape, TensorRef z_a, const std::vector<Eigen::Vector2d>& xy_a,
                              const PointCloud& raw_a, TensorRef z_b,
                              const std::vector<Eigen::Vector2d>& xy_b,
                              const RigidTransform& b_to_a, const std::vector<int>& corr);

// Convenience overload resolving the correspondents at the current heights.
TensorRef regression_loss_dir(Tape& tape, TensorRef z_a, const std::vector<Eigen::Vector2d>& xy_a,
                              const PointCloud& raw_a, TensorRef z_b,
                              const std::vector<Eigen::Vector2d>& xy_b,
                              const RigidTransform& b_to_a, double r_corr);

// Mean binary cross entropy over active cells, log arguments clamped at 1e-12.
TensorRef bce_loss(Tape& tape, TensorRef gamma, const Eigen::VectorXd& labels);

// Deep-resolution active set of a grid: occupied pillars downsampled by the
// given stride (power of two).
std::vector<std::pair<int, int>> deep_active_set(const BevGrid& grid, int stride);

struct OverlapLabels {
    Eigen::VectorXd for_p;  // one 0/1 entry per deep active cell of P
    Eigen::VectorXd for_q;
};

// A deep cell of P is positive iff at least one point of Q, transformed into
// P's frame, lands in the cell's metric x/y footprint (z within extent).
OverlapLabels make_overlap_labels(const BevGrid& grid_p, const PointCloud& cloud_p,
                                  const BevGrid& grid_q, const PointCloud& cloud_q,
                                  const RigidTransform& gt_q_to_p, int deep_stride);

struct LossWeights {
    double desc = 1.0;
    double det = 1.0;
    double reg = 1.0;
    double bce = 1.0;
    double sg = 1.0;
};

struct LossParts {
    TensorRef desc, det, reg, bce, sg;
};

// Weighted sum; throws NumericError naming the first non-finite part.
TensorRef total_loss(Tape& tape, const LossParts& parts, const LossWeights& weights);

}  // namespace bevnet
