#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

struct KMeansOptions {
    std::size_t k = 2;
    std::uint64_t seed = 0;
    std::size_t max_iter = 300;
    double tol = 1e-6;
    // Independent k-means++ restarts; the lowest final inertia wins (earliest on ties).
    std::size_t n_init = 10;
};

struct ClusterAssignment {
    std::vector<std::size_t> cluster;  // per point, in [0, k)
    std::size_t k = 0;
    Matrix centroids;                  // k x D
    double inertia = 0.0;
    // Inertia after each assignment step of the winning run; nonincreasing.
    std::vector<double> inertia_history;
};

ClusterAssignment kmeans(const Matrix& points, const KMeansOptions& options);

struct ClusterSummary {
    std::size_t size = 0;
    std::optional<double> auc;  // cluster positives vs. all negatives
    // Fraction of the cluster's records carrying each label (target class excluded).
    std::map<std::string, double> cooccurrence;
};

struct StratificationReport {
    std::string target_class;
    double overall_auc = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::vector<std::string> positive_ids;
    std::vector<std::size_t> cluster_of;  // per positive
    std::vector<ClusterSummary> clusters;
    std::optional<std::string> warning;

    std::string render_summary() const;      // cluster,size,auc,top co-occurring labels
    std::string render_assignments() const;  // record_id,class,cluster
};

// Clusters the full output vectors of the target class's positives.
StratificationReport stratify_class(const PredictionMatrix& preds, const LabelMatrix& labels,
                                    const std::string& target_class, const KMeansOptions& options);

struct RocPoint {
    double threshold = 0.0;  // scores >= threshold are called positive
    double fpr = 0.0;
    double tpr = 0.0;
};

// ROC curve from (0,0) to (1,1), one point per distinct score, thresholds descending.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const double> labels);

struct EnsembleStats {
    PredictionMatrix mean;
    PredictionMatrix std;  // sample standard deviation (divisor M - 1)
};

EnsembleStats ensemble_uncertainty(std::span<const PredictionMatrix> members);

struct UncertaintyRow {
    std::string record_id;
    std::string class_code;
    double likelihood = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

struct BucketSummary {
    double likelihood = 0.0;
    std::size_t count = 0;
    std::optional<std::array<double, 5>> quantiles;  // 5, 25, 50, 75, 95 percent
};

struct UncertaintyTable {
    std::vector<UncertaintyRow> rows;
    std::vector<BucketSummary> buckets;

    std::string render_rows() const;
    std::string render_buckets() const;
};

// Likelihood buckets are {15, 35, 50, 80, 100} plus any other value observed.
UncertaintyTable uncertainty_vs_likelihood(const EnsembleStats& stats, const LabelMatrix& labels);

}  // namespace ecgbench
