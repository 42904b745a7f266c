#include "ecgbench/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>

#include "ecgbench/error.hpp"
#include "ecgbench/metrics.hpp"
#include "ecgbench/parallel.hpp"
#include "ecgbench/random.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench {

namespace {

constexpr char kMagic[] = "ECGBPLAN";
constexpr std::size_t kHeaderSize = 8 + 4 * 8;

}  // namespace

BootstrapPlan make_plan(const LabelMatrix& labels, const PlanOptions& options) {
    const std::size_t n = labels.num_records(), c_count = labels.num_classes();
    if (n == 0) throw DataError("cannot bootstrap an empty test set");
    if (n > std::numeric_limits<std::uint32_t>::max()) throw DataError("too many records for a bootstrap plan");
    if (options.n_iterations == 0) throw ArgumentError("n_iterations must be positive");

    const bool constrained = options.constraint == BootstrapConstraint::every_class_positive;
    std::vector<std::vector<std::uint32_t>> positives_of(n);
    std::vector<std::size_t> class_count(c_count, 0);
    if (constrained) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < c_count; ++c) {
                if (labels.values(i, c) == 1.0) {
                    positives_of[i].push_back(static_cast<std::uint32_t>(c));
                    ++class_count[c];
                }
            }
        }
        for (std::size_t c = 0; c < c_count; ++c) {
            if (class_count[c] == 0) {
                throw DataError("bootstrap constraint unsatisfiable: class " + labels.class_codes[c] +
                                " has no positive in the test set");
            }
        }
    }

    BootstrapPlan plan;
    plan.n_records = n;
    plan.n_iterations = options.n_iterations;
    plan.master_seed = options.master_seed;
    plan.constraint = options.constraint;
    plan.index_table.resize(options.n_iterations * n);

    parallel_for(options.n_iterations, options.threads, [&](std::size_t it) {
        SplitMix64 rng(mix_seed(options.master_seed, it));
        std::uint32_t* row = plan.index_table.data() + it * n;
        std::vector<std::uint64_t> seen(c_count, 0);
        for (std::uint64_t attempt = 1;; ++attempt) {
            std::size_t covered = 0;
            for (std::size_t k = 0; k < n; ++k) {
                row[k] = static_cast<std::uint32_t>(rng.below(n));
                if (!constrained) continue;
                for (auto c : positives_of[row[k]]) {
                    if (seen[c] != attempt) {
                        seen[c] = attempt;
                        ++covered;
                    }
                }
            }
            if (!constrained || covered == c_count) return;
            if (attempt >= options.max_attempts_per_row) {
                const auto rarest = std::min_element(class_count.begin(), class_count.end()) - class_count.begin();
                throw DataError("bootstrap redraw budget exceeded at iteration " + std::to_string(it) +
                                "; rarest class " + labels.class_codes[static_cast<std::size_t>(rarest)] + " has " +
                                std::to_string(class_count[static_cast<std::size_t>(rarest)]) + " positives");
            }
        }
    });
    return plan;
}

std::string serialize_plan(const BootstrapPlan& plan) {
    std::string out(kMagic, 8);
    out.reserve(kHeaderSize + plan.index_table.size() * 4);
    put_u64(out, plan.n_records);
    put_u64(out, plan.n_iterations);
    put_u64(out, plan.master_seed);
    put_u64(out, static_cast<std::uint64_t>(plan.constraint));
    for (auto v : plan.index_table) put_u32(out, v);
    return out;
}

BootstrapPlan deserialize_plan(std::string_view bytes) {
    if (bytes.size() < kHeaderSize || bytes.substr(0, 8) != std::string_view(kMagic, 8)) {
        throw DataError("not a bootstrap plan (bad magic)");
    }
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
    BootstrapPlan plan;
    plan.n_records = get_u64(p + 8);
    plan.n_iterations = get_u64(p + 16);
    plan.master_seed = get_u64(p + 24);
    const auto tag = get_u64(p + 32);
    if (tag > 1) throw DataError("bootstrap plan has an unknown constraint tag");
    plan.constraint = static_cast<BootstrapConstraint>(tag);
    const std::uint64_t max_cells = (std::numeric_limits<std::size_t>::max() - kHeaderSize) / 4;
    if (plan.n_records != 0 && plan.n_iterations > max_cells / plan.n_records) {
        throw DataError("bootstrap plan dimensions overflow");
    }
    const std::uint64_t cells = plan.n_records * plan.n_iterations;
    if (bytes.size() != kHeaderSize + cells * 4) throw DataError("bootstrap plan size does not match its header");
    plan.index_table.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        plan.index_table[i] = get_u32(p + kHeaderSize + 4 * i);
        if (plan.index_table[i] >= plan.n_records) throw DataError("bootstrap plan index out of range");
    }
    return plan;
}

void save_plan(const std::filesystem::path& path, const BootstrapPlan& plan) {
    write_file_atomic(path, serialize_plan(plan));
}

BootstrapPlan load_plan(const std::filesystem::path& path) { return deserialize_plan(read_file(path)); }

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ArgumentError("percentile of an empty sample");
    if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile must be in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

BootstrapReport bootstrap_ci(const RowMetric& metric, const BootstrapPlan& plan, double alpha, unsigned threads) {
    if (plan.n_iterations == 0) throw ArgumentError("bootstrap plan has no iterations");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");

    std::vector<std::uint32_t> all(plan.n_records);
    std::iota(all.begin(), all.end(), 0u);
    BootstrapReport report;
    report.point = metric(all);

    report.samples.resize(plan.n_iterations);
    parallel_for(plan.n_iterations, threads, [&](std::size_t it) {
        try {
            report.samples[it] = metric(plan.row(it));
        } catch (const UndefinedMetric& e) {
            throw UndefinedMetric("metric undefined on bootstrap iteration " + std::to_string(it) + ": " + e.what());
        }
    });
    report.lower = percentile(report.samples, 100.0 * alpha / 2.0);
    report.upper = percentile(report.samples, 100.0 * (1.0 - alpha / 2.0));
    report.formatted = format_pm(report.point, report.lower, report.upper);
    return report;
}

std::string format_pm(double point, double lower, double upper, int decimals) {
    if (decimals < 0 || decimals > 12) throw ArgumentError("decimals must be in [0, 12]");
    const double scale = std::pow(10.0, decimals);
    double rounded = std::round(point * scale) / scale;
    if (rounded == 0.0) rounded = 0.0;  // no "-0.000"
    const double dev = std::max(std::fabs(point - lower), std::fabs(point - upper));
    // guard against representation noise like 0.009 -> 9.000000000000002 units
    const auto units = static_cast<long long>(std::ceil(dev * scale - 1e-6));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f(%02lld)", decimals, rounded, std::max(0LL, units));
    return buf;
}

RowMetric macro_auc_metric(const PredictionMatrix& preds, const LabelMatrix& labels) {
    auto table = std::make_shared<const AucTable>(preds, labels);
    return [table](std::span<const std::uint32_t> rows) {
        const auto v = table->macro(rows);
        if (!v) throw UndefinedMetric("macro AUC undefined: a class lacks positives or negatives");
        return *v;
    };
}

RowMetric fmax_metric(const PredictionMatrix& preds, const LabelMatrix& labels) {
    auto table = std::make_shared<const FmaxTable>(preds, labels, ThresholdGrid::standard());
    return [table](std::span<const std::uint32_t> rows) { return table->evaluate(rows).fmax; };
}

}  // namespace ecgbench
