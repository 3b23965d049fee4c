#include "bevnet/heads.hpp"

#include <numeric>

namespace bevnet {

SparseMap describe(Tape& tape, const SparseMap& f1, const ConvParams& conv1x1) {
    if (conv1x1.kernel != 1) throw ShapeError("describe: expects a 1x1 convolution");
    SparseMap pre = submanifold_conv(tape, f1, conv1x1);
    // constant pad channel keeps the norm (and the channel max) bounded away
    // from zero even for cells the ReLU cascade silenced
    TensorRef pad = tape.constant(Mat::Constant(tape.value(pre.feat).rows(), 1, 0.05));
    pre.feat = tape.concat_cols({pre.feat, pad});
    return pointwise(tape, pre, Pointwise::L2Norm);
}

SparseMap spatial_saliency(Tape& tape, const SparseMap& d, int window) {
    SparseMap mean = sparse_avg_pool(tape, d, window);
    SparseMap out = d;
    out.feat = tape.softplus(tape.sub(d.feat, mean.feat));
    return out;
}

SparseMap channel_score(Tape& tape, const SparseMap& d) {
    TensorRef mx = tape.row_max(d.feat);
    if ((tape.value(mx).array() <= 0.0).any())
        throw DegenerateError("channel_score: cell with non-positive channel maximum");
    SparseMap out = d;
    out.feat = tape.div_colvec(d.feat, mx);
    return out;
}

TensorRef detection_score(Tape& tape, const SparseMap& alpha, const SparseMap& beta) {
    if (alpha.active != beta.active)
        throw ShapeError("detection_score: alpha/beta active sets differ");
    return tape.row_max(tape.cmul(alpha.feat, beta.feat));
}

HeightForward regress_heights(Tape& tape, const SparseMap& f1, const BevGrid& grid,
                              const ConvParams& conv3x3) {
    const int channels = grid.config().channels;
    SparseMap wmap = submanifold_conv(tape, f1, conv3x3);
    if (tape.value(wmap.feat).cols() != channels)
        throw ShapeError("regress_heights: conv output width must equal grid channels");
    const int n = f1.count();
    Mat mask = Mat::Zero(n, channels);
    Mat centers = Mat::Zero(n, channels);
    for (int r = 0; r < n; ++r) {
        const auto [i, j] = f1.active[r];
        bool any = false;
        for (int k = 0; k < channels; ++k) {
            if (grid.at(i, j, k)) {
                mask(r, k) = 1.0;
                centers(r, k) = grid.channel_center_z(k);
                any = true;
            }
        }
        if (!any) throw ShapeError("regress_heights: active cell over an empty pillar");
    }
    HeightForward out;
    out.raw_weights = tape.sigmoid(wmap.feat);
    TensorRef masked = tape.cmul(out.raw_weights, tape.constant(mask));
    // sigmoid outputs are positive but can underflow; the floor keeps the
    // division (and its backward, which squares the denominator) finite
    TensorRef denom = tape.clamp_min(tape.row_sum(masked), 1e-12);
    out.norm_weights = tape.div_colvec(masked, denom);
    out.heights = tape.row_sum(tape.cmul(out.norm_weights, tape.constant(centers)));
    return out;
}

double similarity(const Mat& gamma_p, const Mat& gamma_q) {
    if (gamma_p.size() == 0 || gamma_q.size() == 0)
        throw EmptyInputError("similarity: empty overlap map");
    return 0.5 * (gamma_p.mean() + gamma_q.mean());
}

std::vector<Keypoint> extract_keypoints(const BevGrid& grid,
                                        const std::vector<std::pair<int, int>>& active,
                                        const Eigen::VectorXd& scores,
                                        const Eigen::VectorXd& heights, const Mat& descriptors,
                                        const SparseMap& deep_map, const Eigen::VectorXd& overlap,
                                        const KeypointExtractConfig& cfg) {
    const int n = static_cast<int>(active.size());
    if (scores.size() != n || heights.size() != n || descriptors.rows() != n)
        throw ShapeError("extract_keypoints: per-cell array sizes disagree");
    std::vector<int> candidates;
    for (int r = 0; r < n; ++r) {
        if (cfg.overlap_threshold > 0.0) {
            const int deep_row =
                deep_map.find(active[r].first / cfg.deep_stride, active[r].second / cfg.deep_stride);
            if (deep_row < 0 || overlap(deep_row) < cfg.overlap_threshold) continue;
        }
        candidates.push_back(r);
    }
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return active[a] < active[b];
    });
    if (static_cast<int>(candidates.size()) > cfg.max_count) candidates.resize(cfg.max_count);
    std::vector<Keypoint> out;
    out.reserve(candidates.size());
    for (int r : candidates) {
        Keypoint kp;
        kp.position = Eigen::Vector3d(grid.cell_center_x(active[r].first),
                                      grid.cell_center_y(active[r].second), heights(r));
        kp.score = scores(r);
        kp.descriptor = descriptors.row(r);
        out.push_back(std::move(kp));
    }
    return out;
}

}  // namespace bevnet
