#include "bevnet/losses.hpp"

#include <cmath>
#include <random>

namespace bevnet {

std::vector<CorrespondenceSample> sample_correspondences(
    const std::vector<Eigen::Vector3d>& points_a, const std::vector<Eigen::Vector3d>& points_b,
    const SamplerConfig& cfg) {
    if (points_a.empty() || points_b.empty())
        throw EmptyInputError("sample_correspondences: empty cloud");
    if (!(cfg.radii.r_pos > 0 && cfg.radii.r_safe > cfg.radii.r_pos))
        throw ConfigError("sample_correspondences: require 0 < r_pos < r_safe");

    std::mt19937_64 rng(cfg.seed);
    std::vector<CorrespondenceSample> anchors;
    for (int i = 0; i < static_cast<int>(points_a.size()); ++i) {
        CorrespondenceSample s;
        s.anchor = i;
        double best = cfg.radii.r_pos;
        std::vector<int> far;
        for (int j = 0; j < static_cast<int>(points_b.size()); ++j) {
            const double d = (points_a[i] - points_b[j]).norm();
            if (d <= cfg.radii.r_pos) {
                s.positives.push_back(j);
                if (d <= best) {
                    best = d;
                    s.matched = j;
                }
            } else if (d > cfg.radii.r_safe) {
                far.push_back(j);
            }
        }
        if (s.positives.empty() || far.empty()) continue;
        if (static_cast<int>(far.size()) > cfg.max_negatives) {
            // without-replacement draw, deterministic for a given seed
            for (int k = 0; k < cfg.max_negatives; ++k) {
                std::uniform_int_distribution<int> pick(k, static_cast<int>(far.size()) - 1);
                std::swap(far[k], far[pick(rng)]);
            }
            far.resize(cfg.max_negatives);
        }
        s.negatives = std::move(far);
        anchors.push_back(std::move(s));
    }
    if (anchors.empty())
        throw NoOverlapError("sample_correspondences: no anchor has a positive");
    if (static_cast<int>(anchors.size()) > cfg.max_anchors) {
        for (int k = 0; k < cfg.max_anchors; ++k) {
            std::uniform_int_distribution<int> pick(k, static_cast<int>(anchors.size()) - 1);
            std::swap(anchors[k], anchors[pick(rng)]);
        }
        anchors.resize(cfg.max_anchors);
    }
    return anchors;
}

namespace {

// Flattened (anchor, partner) pair distances plus per-anchor grouping.
struct PairDistances {
    TensorRef dist;  // M x 1
    std::vector<std::vector<int>> groups;
    std::vector<std::vector<double>> unit_weights;
};

PairDistances pair_distances(Tape& tape, TensorRef feat_a, TensorRef feat_b,
                             const std::vector<CorrespondenceSample>& samples, bool positives) {
    std::vector<int> rows_a, rows_b;
    PairDistances out;
    out.groups.resize(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& set = positives ? samples[s].positives : samples[s].negatives;
        for (int j : set) {
            out.groups[s].push_back(static_cast<int>(rows_a.size()));
            rows_a.push_back(samples[s].anchor);
            rows_b.push_back(j);
        }
    }
    out.unit_weights.resize(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s)
        out.unit_weights[s].assign(out.groups[s].size(), 1.0);
    TensorRef diff =
        tape.sub(tape.gather_rows(feat_a, rows_a), tape.gather_rows(feat_b, rows_b));
    out.dist = tape.rows_norm(diff);
    return out;
}

}  // namespace

TensorRef circle_loss(Tape& tape, TensorRef feat_a, TensorRef feat_b,
                      const std::vector<CorrespondenceSample>& samples, const CircleParams& params,
                      const CircleWeights* reuse, CircleWeights* record) {
    params.validate();
    for (const auto& s : samples) {
        if (s.positives.empty() || s.negatives.empty())
            throw DegenerateError("circle_loss: sample with empty positive or negative set");
    }
    PairDistances pos = pair_distances(tape, feat_a, feat_b, samples, true);
    PairDistances neg = pair_distances(tape, feat_a, feat_b, samples, false);
    const Eigen::Index np = tape.value(pos.dist).rows(), nn = tape.value(neg.dist).rows();
    Eigen::VectorXd wp(np), wn(nn);
    if (reuse) {
        if (static_cast<Eigen::Index>(reuse->pos.size()) != np ||
            static_cast<Eigen::Index>(reuse->neg.size()) != nn)
            throw ShapeError("circle_loss: reused weight count mismatch");
        wp = Eigen::Map<const Eigen::VectorXd>(reuse->pos.data(), np);
        wn = Eigen::Map<const Eigen::VectorXd>(reuse->neg.data(), nn);
    } else {
        for (Eigen::Index i = 0; i < np; ++i)
            wp(i) = std::max(0.0, tape.value(pos.dist)(i, 0) - params.delta_p);
        for (Eigen::Index i = 0; i < nn; ++i)
            wn(i) = std::max(0.0, params.delta_n - tape.value(neg.dist)(i, 0));
    }
    if (record) {
        record->pos.assign(wp.data(), wp.data() + np);
        record->neg.assign(wn.data(), wn.data() + nn);
    }
    // exponent_p = scale*w_p*(d - delta_p), exponent_n = scale*w_n*(delta_n - d);
    // satisfied samples carry zero weight, so each contributes 1 and the
    // per-anchor floor is ln(2)/scale once every margin holds.
    TensorRef ep = tape.exp(tape.cmul(tape.constant(Mat(params.scale * wp)),
                                      tape.add_scalar(pos.dist, -params.delta_p)));
    TensorRef en = tape.exp(tape.cmul(tape.constant(Mat(params.scale * wn)),
                                      tape.scale(tape.add_scalar(neg.dist, -params.delta_n), -1.0)));
    TensorRef pos_sum = tape.row_combine(ep, pos.groups, pos.unit_weights, 1);
    TensorRef neg_sum = tape.row_combine(en, neg.groups, neg.unit_weights, 1);
    // ln(1 + pos_sum * neg_sum) / scale, via log of the shifted product
    TensorRef prod = tape.add_scalar(tape.cmul(pos_sum, neg_sum), 1.0);
    return tape.scale(tape.mean_all(tape.log(prod)), 1.0 / params.scale);
}

TensorRef detection_loss(Tape& tape, TensorRef desc_a, TensorRef desc_b,
                         const std::vector<CorrespondenceSample>& samples, TensorRef score_a,
                         TensorRef score_b) {
    std::vector<int> anchor_rows, matched_rows;
    for (const auto& s : samples) {
        if (s.matched < 0 || s.negatives.empty())
            throw DegenerateError("detection_loss: sample without match or negatives");
        anchor_rows.push_back(s.anchor);
        matched_rows.push_back(s.matched);
    }
    TensorRef d_pos = tape.rows_norm(
        tape.sub(tape.gather_rows(desc_a, anchor_rows), tape.gather_rows(desc_b, matched_rows)));
    PairDistances neg = pair_distances(tape, desc_a, desc_b, samples, false);
    // hardest negative per anchor: gather each anchor's negative distances
    // into one row (ragged rows padded with their own first entry) and row_min
    std::size_t width = 0;
    for (const auto& g : neg.groups) width = std::max(width, g.size());
    std::vector<TensorRef> cols;
    for (std::size_t c = 0; c < width; ++c) {
        std::vector<int> col_idx(samples.size());
        for (std::size_t s = 0; s < samples.size(); ++s)
            col_idx[s] = neg.groups[s][std::min(c, neg.groups[s].size() - 1)];
        cols.push_back(tape.gather_rows(neg.dist, col_idx));
    }
    TensorRef d_neg = tape.row_min(tape.concat_cols(cols));
    TensorRef sa = tape.gather_rows(score_a, anchor_rows);
    TensorRef sb = tape.gather_rows(score_b, matched_rows);
    return tape.mean_all(tape.cmul(tape.sub(d_pos, d_neg), tape.add(sa, sb)));
}

std::vector<int> regression_correspondents(const Eigen::VectorXd& z_a,
                                           const std::vector<Eigen::Vector2d>& xy_a,
                                           const Eigen::VectorXd& z_b,
                                           const std::vector<Eigen::Vector2d>& xy_b,
                                           const RigidTransform& b_to_a, double r_corr) {
    const int n = static_cast<int>(xy_a.size());
    std::vector<int> corr(n, -1);
    std::vector<Eigen::Vector3d> b_in_a(xy_b.size());
    for (std::size_t j = 0; j < xy_b.size(); ++j)
        b_in_a[j] = b_to_a.apply(Eigen::Vector3d(xy_b[j].x(), xy_b[j].y(), z_b(j)));
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d pa(xy_a[i].x(), xy_a[i].y(), z_a(i));
        double best = r_corr;
        for (std::size_t j = 0; j < b_in_a.size(); ++j) {
            const double d = (pa - b_in_a[j]).norm();
            if (d <= best) {
                best = d;
                corr[i] = static_cast<int>(j);
            }
        }
    }
    return corr;
}

TensorRef regression_loss_dir(Tape& tape, TensorRef z_a, const std::vector<Eigen::Vector2d>& xy_a,
                              const PointCloud& raw_a, TensorRef z_b,
                              const std::vector<Eigen::Vector2d>& xy_b,
                              const RigidTransform& b_to_a, const std::vector<int>& corr) {
    const int n = static_cast<int>(xy_a.size());
    if (n == 0) throw EmptyInputError("regression_loss: empty regressed cloud");
    if (raw_a.empty()) throw EmptyInputError("regression_loss: empty raw cloud");
    if (tape.value(z_a).rows() != n || static_cast<int>(corr.size()) != n)
        throw ShapeError("regression_loss: z/xy/corr size mismatch");

    // term 1: nearest raw point in the (x,y) plane
    Eigen::VectorXd nearest_z(n);
    for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : raw_a.points) {
            const double d = (Eigen::Vector2d(p.x(), p.y()) - xy_a[i]).squaredNorm();
            if (d < best) {
                best = d;
                nearest_z(i) = p.z();
            }
        }
    }
    TensorRef term1 = tape.abs(tape.sub(z_a, tape.constant(nearest_z)));

    // term 2: corresponding regressed point of the counterpart, transformed
    // into this frame
    const auto& rot = b_to_a.rotation();
    const auto& tr = b_to_a.translation();
    std::vector<int> gather_b(n, -1);
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (corr[i] < 0) continue;
        gather_b[i] = corr[i];
        // z of the transformed point is affine in the counterpart's height
        shift(i) = rot(2, 0) * xy_b[corr[i]].x() + rot(2, 1) * xy_b[corr[i]].y() + tr.z();
        mask(i) = 1.0;
    }
    TensorRef zb_corr = tape.add(tape.scale(tape.gather_rows(z_b, gather_b), rot(2, 2)),
                                 tape.constant(shift));
    TensorRef term2 =
        tape.cmul(tape.abs(tape.sub(z_a, zb_corr)), tape.constant(mask));
    return tape.mean_all(tape.add(term1, term2));
}

TensorRef regression_loss_dir(Tape& tape, TensorRef z_a, const std::vector<Eigen::Vector2d>& xy_a,
                              const PointCloud& raw_a, TensorRef z_b,
                              const std::vector<Eigen::Vector2d>& xy_b,
                              const RigidTransform& b_to_a, double r_corr) {
    const auto corr = regression_correspondents(tape.value(z_a).col(0), xy_a,
                                                tape.value(z_b).col(0), xy_b, b_to_a, r_corr);
    return regression_loss_dir(tape, z_a, xy_a, raw_a, z_b, xy_b, b_to_a, corr);
}

TensorRef bce_loss(Tape& tape, TensorRef gamma, const Eigen::VectorXd& labels) {
    if (tape.value(gamma).rows() != labels.size())
        throw ShapeError("bce_loss: score/label active sets differ");
    TensorRef log_g = tape.log(tape.clamp_min(gamma, 1e-12));
    TensorRef one_minus = tape.add_scalar(tape.scale(gamma, -1.0), 1.0);
    TensorRef log_1mg = tape.log(tape.clamp_min(one_minus, 1e-12));
    TensorRef lt = tape.constant(labels);
    TensorRef lf = tape.constant((1.0 - labels.array()).matrix());
    TensorRef ll = tape.add(tape.cmul(lt, log_g), tape.cmul(lf, log_1mg));
    return tape.scale(tape.mean_all(ll), -1.0);
}

std::vector<std::pair<int, int>> deep_active_set(const BevGrid& grid, int stride) {
    std::vector<std::pair<int, int>> deep;
    for (const auto& [i, j] : grid.active_pillars()) deep.emplace_back(i / stride, j / stride);
    std::sort(deep.begin(), deep.end());
    deep.erase(std::unique(deep.begin(), deep.end()), deep.end());
    return deep;
}

namespace {

Eigen::VectorXd label_side(const BevGrid& grid_ref, const PointCloud& other,
                           const RigidTransform& other_to_ref, int stride) {
    const auto deep = deep_active_set(grid_ref, stride);
    const auto& cfg = grid_ref.config();
    Eigen::VectorXd labels = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(deep.size()));
    for (const auto& p : other.points) {
        const Eigen::Vector3d q = other_to_ref.apply(p);
        if (q.z() < cfg.extent.zmin || q.z() > cfg.extent.zmax) continue;
        const int fi = bin_coordinate(q.x(), cfg.extent.xmin, cfg.extent.xmax, cfg.rows);
        const int fj = bin_coordinate(q.y(), cfg.extent.ymin, cfg.extent.ymax, cfg.cols);
        if (fi < 0 || fj < 0) continue;
        const int di = fi / stride, dj = fj / stride;
        auto it = std::lower_bound(deep.begin(), deep.end(), std::make_pair(di, dj));
        if (it != deep.end() && *it == std::make_pair(di, dj))
            labels(it - deep.begin()) = 1.0;
    }
    return labels;
}

}  // namespace

OverlapLabels make_overlap_labels(const BevGrid& grid_p, const PointCloud& cloud_p,
                                  const BevGrid& grid_q, const PointCloud& cloud_q,
                                  const RigidTransform& gt_q_to_p, int deep_stride) {
    OverlapLabels out;
    out.for_p = label_side(grid_p, cloud_q, gt_q_to_p, deep_stride);
    out.for_q = label_side(grid_q, cloud_p, gt_q_to_p.inverse(), deep_stride);
    return out;
}

TensorRef total_loss(Tape& tape, const LossParts& parts, const LossWeights& weights) {
    struct Term {
        const char* name;
        TensorRef t;
        double w;
    };
    const Term terms[] = {{"desc", parts.desc, weights.desc},
                          {"det", parts.det, weights.det},
                          {"reg", parts.reg, weights.reg},
                          {"bce", parts.bce, weights.bce},
                          {"sg", parts.sg, weights.sg}};
    TensorRef total = tape.constant(Mat::Zero(1, 1));
    for (const auto& term : terms) {
        if (term.w == 0.0 || !term.t.valid()) continue;
        if (!std::isfinite(tape.value(term.t)(0, 0)))
            throw NumericError(std::string("total_loss: non-finite term ") + term.name);
        total = tape.add(total, tape.scale(term.t, term.w));
    }
    return total;
}

}  // namespace bevnet
