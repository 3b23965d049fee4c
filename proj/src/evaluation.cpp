#include "bevnet/evaluation.hpp"

#include <cmath>

namespace bevnet {

std::optional<double> OverlapMetrics::iou() const {
    const long den = tp + fp + fn;
    if (den == 0) return std::nullopt;
    return static_cast<double>(tp) / den;
}

std::optional<double> OverlapMetrics::precision() const {
    const long den = tp + fp;
    if (den == 0) return std::nullopt;
    return static_cast<double>(tp) / den;
}

std::optional<double> OverlapMetrics::recall() const {
    const long den = tp + fn;
    if (den == 0) return std::nullopt;
    return static_cast<double>(tp) / den;
}

OverlapMetrics overlap_metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& labels,
                               double threshold) {
    if (predicted.size() != labels.size())
        throw ShapeError("overlap_metrics: prediction/label active sets differ");
    OverlapMetrics m;
    for (Eigen::Index i = 0; i < predicted.size(); ++i) {
        const bool pred = predicted(i) >= threshold;
        const bool truth = labels(i) >= 0.5;
        if (pred && truth) ++m.tp;
        else if (pred && !truth) ++m.fp;
        else if (!pred && truth) ++m.fn;
        else ++m.tn;
    }
    return m;
}

std::pair<double, double> pose_errors(const RigidTransform& estimate, const RigidTransform& gt) {
    const double rte = (estimate.translation() - gt.translation()).norm();
    const double arg = ((gt.rotation().transpose() * estimate.rotation()).trace() - 1.0) / 2.0;
    const double rre = std::acos(std::clamp(arg, -1.0, 1.0)) * 180.0 / M_PI;
    return {rte, rre};
}

double registration_recall(const std::vector<PairOutcome>& outcomes, double rte_max,
                           double rre_max) {
    if (outcomes.empty()) throw EmptyInputError("registration_recall: no pairs");
    long ok = 0;
    for (const auto& o : outcomes) {
        if (o.registered && o.rte < rte_max && o.rre < rre_max) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(outcomes.size());
}

RetrievalResult recall_at_1(const std::vector<RigidTransform>& poses,
                            const std::function<double(int, int)>& score,
                            const RetrievalProtocol& protocol) {
    const int n = static_cast<int>(poses.size());
    if (n <= protocol.exclusion_window)
        throw EmptyInputError("recall_at_1: sequence shorter than the exclusion window");
    RetrievalResult res;
    res.top_choice.assign(n, -1);
    for (int q = 0; q < n; ++q) {
        bool has_candidate = false;
        for (int c = 0; c < n; ++c) {
            if (std::abs(c - q) <= protocol.exclusion_window) continue;
            if ((poses[q].translation() - poses[c].translation()).norm() <
                protocol.success_radius) {
                has_candidate = true;
                break;
            }
        }
        if (!has_candidate) continue;
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < n; ++c) {
            if (std::abs(c - q) <= protocol.exclusion_window) continue;
            const double s = score(q, c);
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        res.top_choice[q] = best;
        ++res.queries;
        if (best >= 0 &&
            (poses[q].translation() - poses[best].translation()).norm() < protocol.success_radius)
            ++res.correct;
    }
    if (res.queries == 0) throw EmptyInputError("recall_at_1: no valid query");
    return res;
}

double RetrievalResult::recall_at_1() const {
    return queries == 0 ? 0.0 : static_cast<double>(correct) / queries;
}

}  // namespace bevnet
