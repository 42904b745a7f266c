#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

// Ordered thresholds in which "predicted" means score >= tau.
class ThresholdGrid {
public:
    // {0.00, 0.01, ..., 1.00}
    static ThresholdGrid standard();
    // Every distinct score value in the matrix.
    static ThresholdGrid exact(const PredictionMatrix& preds);
    // Throws ArgumentError unless strictly increasing, finite and non-empty.
    explicit ThresholdGrid(std::vector<double> values);

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

// Tie-corrected Mann-Whitney AUC. labels are 0/1. Throws UndefinedMetric when
// only one class is present.
double class_auc(std::span<const double> scores, std::span<const double> labels);

enum class UndefinedClassPolicy { error, exclude };

struct MacroAuc {
    std::vector<std::string> class_codes;
    std::vector<std::optional<double>> per_class;  // nullopt for excluded classes
    double macro = 0.0;
    std::vector<std::string> excluded;
};

MacroAuc macro_auc(const PredictionMatrix& preds, const LabelMatrix& labels,
                   UndefinedClassPolicy policy = UndefinedClassPolicy::error);

struct SamplePrRc {
    std::optional<double> precision;  // undefined when no record predicts anything
    double recall = 0.0;
    std::size_t n_predicting = 0;     // records with a non-empty prediction set

    double f1() const;
};

SamplePrRc sample_pr_rc(const PredictionMatrix& preds, const LabelMatrix& labels, double tau);

struct FmaxResult {
    double fmax = 0.0;
    double tau = 0.0;
};

FmaxResult fmax(const PredictionMatrix& preds, const LabelMatrix& labels,
                const ThresholdGrid& grid = ThresholdGrid::standard());

// Per-record counts on a fixed grid so that Fmax over any multiset of rows
// (bootstrap resamples) costs O(rows x grid).
class FmaxTable {
public:
    FmaxTable(const PredictionMatrix& preds, const LabelMatrix& labels, const ThresholdGrid& grid);

    std::size_t num_records() const { return truth_.size(); }
    FmaxResult evaluate() const;
    FmaxResult evaluate(std::span<const std::uint32_t> rows) const;

private:
    template <typename Rows>
    FmaxResult evaluate_rows(const Rows& rows, std::size_t count) const;

    std::vector<double> grid_;
    std::vector<std::uint32_t> truth_;      // |T_i|
    std::vector<std::uint32_t> predicted_;  // |P_i(tau_g)|, record-major
    std::vector<std::uint32_t> hits_;       // |P_i(tau_g) & T_i|
};

// Per-class weighted TP/FP/FN/TN; record i has weight 1 / max(1, |T_i|).
struct ConfusionCounts {
    std::vector<double> tp, fp, fn, tn;
    std::size_t num_classes() const { return tp.size(); }
};

ConfusionCounts weighted_confusion(const PredictionMatrix& preds, const LabelMatrix& labels, double tau);

struct ClassScores {
    std::vector<double> per_class;
    double macro = 0.0;
};

ClassScores f_beta(const ConfusionCounts& counts, double beta);
ClassScores g_beta(const ConfusionCounts& counts, double beta);

enum class ThresholdMetric { f_beta, g_beta };

// Global threshold maximizing the macro score; the smallest tau wins ties.
double optimize_threshold(const PredictionMatrix& preds, const LabelMatrix& labels, ThresholdMetric metric,
                          double beta = 2.0, const ThresholdGrid& grid = ThresholdGrid::standard());

struct RegressionMetrics {
    double mae = 0.0;
    double r2 = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets);

struct BinaryMetrics {
    double accuracy = 0.0;
    double auc = 0.0;
};

BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const double> labels, double tau = 0.5);

// Rank order of each column, ascending by score, computed once so that AUCs on
// weighted resamples cost O(N) per class.
class AucTable {
public:
    explicit AucTable(const PredictionMatrix& preds, const LabelMatrix& labels);

    std::size_t num_records() const { return num_records_; }
    std::size_t num_classes() const { return order_.size(); }
    // Weighted AUC of one class; weights are row multiplicities.
    std::optional<double> class_auc(std::size_t c, std::span<const double> weights) const;
    // Macro AUC over a multiset of rows; nullopt if some class lacks a
    // positive or a negative in the sample.
    std::optional<double> macro(std::span<const std::uint32_t> rows) const;

private:
    std::size_t num_records_ = 0;
    std::vector<std::vector<std::uint32_t>> order_;
    Matrix scores_;
    Matrix labels_;
};

}  // namespace ecgbench
