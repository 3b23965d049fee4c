#pragma once

#include <functional>
#include <optional>

#include "bevnet/registration.hpp"

namespace bevnet {

struct OverlapMetrics {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    // Undefined (empty denominator) metrics come back as nullopt and are
    // excluded from means.
    std::optional<double> iou() const;
    std::optional<double> precision() const;
    std::optional<double> recall() const;
};

// Confusion counts over active cells; prediction = score >= threshold.
OverlapMetrics overlap_metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& labels,
                               double threshold = 0.5);

// (RTE meters, RRE degrees).
std::pair<double, double> pose_errors(const RigidTransform& estimate, const RigidTransform& gt);

struct PairOutcome {
    bool registered = false;  // false = registration failure signal
    double rte = 0;
    double rre = 0;
};

// Fraction of pairs with rte < rte_max and rre < rre_max; failures are misses.
double registration_recall(const std::vector<PairOutcome>& outcomes, double rte_max = 2.0,
                           double rre_max = 5.0);

struct RetrievalProtocol {
    int exclusion_window = 100;   // frames around the query never scored
    double success_radius = 10;   // meters
};

struct RetrievalResult {
    int queries = 0;
    int correct = 0;
    std::vector<int> top_choice;  // per query index, -1 when skipped
    double recall_at_1() const;
};

// Recall@1 over a pose-annotated sequence. score(a, b) returns the similarity
// tau of frames a and b; only queries with at least one true loop candidate
// count.
RetrievalResult recall_at_1(const std::vector<RigidTransform>& poses,
                            const std::function<double(int, int)>& score,
                            const RetrievalProtocol& protocol);

}  // namespace bevnet
