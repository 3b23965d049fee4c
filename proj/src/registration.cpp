#include "bevnet/registration.hpp"

#include <random>

namespace bevnet {

CorrespondenceSet match(const std::vector<Keypoint>& keypoints_p,
                        const std::vector<Keypoint>& keypoints_q) {
    if (keypoints_p.empty() || keypoints_q.empty())
        throw EmptyInputError("match: empty keypoint set");
    const int np = static_cast<int>(keypoints_p.size());
    const int nq = static_cast<int>(keypoints_q.size());
    auto nearest = [](const Eigen::VectorXd& d, const std::vector<Keypoint>& set) {
        int best = 0;
        double best_d = (d - set[0].descriptor).norm();
        for (int i = 1; i < static_cast<int>(set.size()); ++i) {
            const double v = (d - set[i].descriptor).norm();
            if (v < best_d) {
                best_d = v;
                best = i;
            }
        }
        return std::make_pair(best, best_d);
    };
    std::vector<int> q_nearest(nq);
    for (int j = 0; j < nq; ++j) q_nearest[j] = nearest(keypoints_q[j].descriptor, keypoints_p).first;
    CorrespondenceSet out;
    for (int i = 0; i < np; ++i) {
        const auto [j, dist] = nearest(keypoints_p[i].descriptor, keypoints_q);
        if (q_nearest[j] == i) out.push_back({i, j, dist});
    }
    return out;
}

RigidTransform kabsch(const std::vector<Eigen::Vector3d>& points_p,
                      const std::vector<Eigen::Vector3d>& points_q,
                      const std::vector<double>& weights) {
    const std::size_t n = points_p.size();
    if (n != points_q.size() || (!weights.empty() && weights.size() != n))
        throw ShapeError("kabsch: pair/weight counts disagree");
    if (n < 3) throw EmptyInputError("kabsch: need at least 3 pairs");
    double wsum = 0;
    Eigen::Vector3d cp = Eigen::Vector3d::Zero(), cq = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        wsum += w;
        cp += w * points_p[i];
        cq += w * points_q[i];
    }
    if (wsum <= 0) throw DegenerateError("kabsch: non-positive total weight");
    cp /= wsum;
    cq /= wsum;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        cov += w * (points_p[i] - cp) * (points_q[i] - cq).transpose();
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sing = svd.singularValues();
    // rank must be >= 2 for a unique rotation
    if (sing(1) <= 1e-12 * std::max(1.0, sing(0)))
        throw DegenerateError("kabsch: rank-deficient covariance (collinear points)");
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
    const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
    return RigidTransform(r, cp - r * cq);
}

RegistrationResult ransac_register(const CorrespondenceSet& cs,
                                   const std::vector<Keypoint>& keypoints_p,
                                   const std::vector<Keypoint>& keypoints_q,
                                   const RansacConfig& cfg) {
    const int n = static_cast<int>(cs.size());
    if (n < 3) throw EmptyInputError("ransac_register: need at least 3 correspondences");
    std::vector<Eigen::Vector3d> pp(n), qq(n);
    for (int i = 0; i < n; ++i) {
        pp[i] = keypoints_p[cs[i].index_p].position;
        qq[i] = keypoints_q[cs[i].index_q].position;
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const double r2 = cfg.inlier_radius * cfg.inlier_radius;

    RegistrationResult best;
    double best_rms = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < cfg.max_iterations; ++iter) {
        int a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;
        RigidTransform model;
        try {
            model = kabsch({pp[a], pp[b], pp[c]}, {qq[a], qq[b], qq[c]});
        } catch (const DegenerateError&) {
            continue;
        }
        int count = 0;
        double sq = 0;
        for (int i = 0; i < n; ++i) {
            const double d2 = (pp[i] - model.apply(qq[i])).squaredNorm();
            if (d2 <= r2) {
                ++count;
                sq += d2;
            }
        }
        if (count < 3) continue;
        const double rms = std::sqrt(sq / count);
        if (count > static_cast<int>(best.inliers.size()) ||
            (count == static_cast<int>(best.inliers.size()) && rms < best_rms)) {
            best.inliers.clear();
            for (int i = 0; i < n; ++i) {
                if ((pp[i] - model.apply(qq[i])).squaredNorm() <= r2) best.inliers.push_back(i);
            }
            best.transform = model;
            best_rms = rms;
            best.success = true;
            if (static_cast<double>(count) / n >= cfg.early_exit_ratio) {
                ++iter;
                break;
            }
        }
    }
    best.iterations = iter;
    if (!best.success) {
        best.inlier_ratio = 0;
        return best;
    }
    // refit on the consensus set; keep the refit only if it does not shrink it
    std::vector<Eigen::Vector3d> ip, iq;
    for (int i : best.inliers) {
        ip.push_back(pp[i]);
        iq.push_back(qq[i]);
    }
    try {
        const RigidTransform refit = kabsch(ip, iq);
        std::vector<int> refit_inliers;
        for (int i = 0; i < n; ++i) {
            if ((pp[i] - refit.apply(qq[i])).squaredNorm() <= r2) refit_inliers.push_back(i);
        }
        if (refit_inliers.size() >= best.inliers.size()) {
            best.transform = refit;
            best.inliers = std::move(refit_inliers);
        }
    } catch (const DegenerateError&) {
        // keep the minimal-sample model
    }
    best.inlier_ratio = static_cast<double>(best.inliers.size()) / n;
    return best;
}

}  // namespace bevnet
