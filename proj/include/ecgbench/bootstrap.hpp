#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

enum class BootstrapConstraint : std::uint64_t { none = 0, every_class_positive = 1 };

// Stored resample indices. Row r is iteration r.
struct BootstrapPlan {
    std::uint64_t n_records = 0;
    std::uint64_t n_iterations = 0;
    std::uint64_t master_seed = 0;
    BootstrapConstraint constraint = BootstrapConstraint::none;
    std::vector<std::uint32_t> index_table;  // n_iterations x n_records, row-major

    std::span<const std::uint32_t> row(std::size_t r) const {
        return {index_table.data() + r * n_records, static_cast<std::size_t>(n_records)};
    }
    bool operator==(const BootstrapPlan&) const = default;
};

struct PlanOptions {
    std::uint64_t n_iterations = 1000;
    std::uint64_t master_seed = 0;
    BootstrapConstraint constraint = BootstrapConstraint::every_class_positive;
    std::uint64_t max_attempts_per_row = 10000;
    unsigned threads = 1;
};

// Rows that miss a positive for some class (under the constraint) are
// discarded and redrawn from the same per-iteration stream.
BootstrapPlan make_plan(const LabelMatrix& labels, const PlanOptions& options);

std::string serialize_plan(const BootstrapPlan& plan);
BootstrapPlan deserialize_plan(std::string_view bytes);
void save_plan(const std::filesystem::path& path, const BootstrapPlan& plan);
BootstrapPlan load_plan(const std::filesystem::path& path);

struct BootstrapReport {
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::string formatted;
    std::vector<double> samples;  // metric value per iteration
};

// Metric over a multiset of rows of the test set. Must be pure; it may be
// called concurrently. Throw UndefinedMetric for undefined values.
using RowMetric = std::function<double(std::span<const std::uint32_t> rows)>;

// Linear interpolation between order statistics (numpy's default).
double percentile(std::vector<double> values, double q);

BootstrapReport bootstrap_ci(const RowMetric& metric, const BootstrapPlan& plan, double alpha = 0.05,
                             unsigned threads = 1);

// "0.743(09)": point rounded half away from zero; the maximal deviation from
// the bounds is rounded up in units of the last printed digit.
std::string format_pm(double point, double lower, double upper, int decimals = 3);

// Row metrics for the common cases. They keep copies of the inputs.
RowMetric macro_auc_metric(const PredictionMatrix& preds, const LabelMatrix& labels);
RowMetric fmax_metric(const PredictionMatrix& preds, const LabelMatrix& labels);

}  // namespace ecgbench
