#include "ecgbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ecgbench/error.hpp"

namespace ecgbench {

namespace {

void require_binary(std::span<const double> labels) {
    for (double v : labels) {
        if (v != 0.0 && v != 1.0) throw DataError("label values must be 0 or 1");
    }
}

// Number of grid points <= s, i.e. s >= tau_g exactly for g below the result.
std::size_t passed(const std::vector<double>& grid, double s) {
    return static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), s) - grid.begin());
}

std::vector<std::uint32_t> ascending_order(std::span<const double> scores) {
    std::vector<std::uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    return order;
}

// Walks tie groups in ascending score order. Each positive earns the weight of
// the negatives strictly below it plus half the tied negatives.
std::optional<double> weighted_auc(std::span<const std::uint32_t> order, std::span<const double> scores,
                                   std::span<const double> labels, std::span<const double> weights) {
    double neg_below = 0.0, pos_total = 0.0, neg_total = 0.0, numer = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        double pos = 0.0, neg = 0.0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            const auto r = order[j];
            const double w = weights.empty() ? 1.0 : weights[r];
            (labels[r] == 1.0 ? pos : neg) += w;
            ++j;
        }
        numer += pos * (neg_below + 0.5 * neg);
        neg_below += neg;
        pos_total += pos;
        neg_total += neg;
        i = j;
    }
    if (pos_total == 0.0 || neg_total == 0.0) return std::nullopt;
    return numer / (pos_total * neg_total);
}

}  // namespace

ThresholdGrid::ThresholdGrid(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ArgumentError("threshold grid is empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) throw ArgumentError("threshold grid contains a non-finite value");
        if (i > 0 && !(values_[i - 1] < values_[i])) throw ArgumentError("threshold grid must be strictly increasing");
    }
}

ThresholdGrid ThresholdGrid::standard() {
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i) v[static_cast<std::size_t>(i)] = i / 100.0;
    return ThresholdGrid(std::move(v));
}

ThresholdGrid ThresholdGrid::exact(const PredictionMatrix& preds) {
    std::set<double> distinct(preds.scores.data().begin(), preds.scores.data().end());
    return ThresholdGrid(std::vector<double>(distinct.begin(), distinct.end()));
}

double class_auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    require_binary(labels);
    const auto order = ascending_order(scores);
    const auto auc = weighted_auc(order, scores, labels, {});
    if (!auc) throw UndefinedMetric("AUC undefined: labels contain a single class");
    return *auc;
}

MacroAuc macro_auc(const PredictionMatrix& preds, const LabelMatrix& labels, UndefinedClassPolicy policy) {
    require_aligned(preds, labels);
    MacroAuc out;
    out.class_codes = labels.class_codes;
    std::vector<std::string> undefined;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < labels.num_classes(); ++c) {
        const auto s = preds.scores.column(c);
        const auto l = labels.values.column(c);
        require_binary(l);
        const auto auc = weighted_auc(ascending_order(s), s, l, {});
        out.per_class.push_back(auc);
        if (auc) {
            sum += *auc;
            ++used;
        } else {
            undefined.push_back(labels.class_codes[c]);
        }
    }
    if (!undefined.empty() && policy == UndefinedClassPolicy::error) {
        std::string msg = "AUC undefined for classes without both positives and negatives:";
        for (const auto& u : undefined) msg += " " + u;
        throw UndefinedMetric(msg);
    }
    if (used == 0) throw UndefinedMetric("AUC undefined for every class");
    out.excluded = std::move(undefined);
    out.macro = sum / static_cast<double>(used);
    return out;
}

double SamplePrRc::f1() const {
    if (!precision) return 0.0;
    const double d = *precision + recall;
    return d > 0.0 ? 2.0 * *precision * recall / d : 0.0;
}

SamplePrRc sample_pr_rc(const PredictionMatrix& preds, const LabelMatrix& labels, double tau) {
    require_aligned(preds, labels);
    const std::size_t n = labels.num_records();
    if (n == 0) throw DataError("no records to evaluate");
    double pr_sum = 0.0, rc_sum = 0.0;
    std::size_t n_tau = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t truth = 0, predicted = 0, hits = 0;
        for (std::size_t c = 0; c < labels.num_classes(); ++c) {
            const bool t = labels.values(i, c) == 1.0;
            const bool p = preds.scores(i, c) >= tau;
            truth += t;
            predicted += p;
            hits += t && p;
        }
        if (truth == 0) throw DataError("record " + labels.record_ids[i] + " has no true labels");
        if (predicted > 0) {
            pr_sum += static_cast<double>(hits) / static_cast<double>(predicted);
            ++n_tau;
        }
        rc_sum += static_cast<double>(hits) / static_cast<double>(truth);
    }
    SamplePrRc out;
    out.n_predicting = n_tau;
    if (n_tau > 0) out.precision = pr_sum / static_cast<double>(n_tau);
    out.recall = rc_sum / static_cast<double>(n);
    return out;
}

FmaxTable::FmaxTable(const PredictionMatrix& preds, const LabelMatrix& labels, const ThresholdGrid& grid)
    : grid_(grid.values()) {
    require_aligned(preds, labels);
    const std::size_t n = labels.num_records(), g = grid_.size();
    truth_.resize(n);
    predicted_.assign(n * g, 0);
    hits_.assign(n * g, 0);
    std::vector<std::uint32_t> pred_hist(g + 1), hit_hist(g + 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(pred_hist.begin(), pred_hist.end(), 0);
        std::fill(hit_hist.begin(), hit_hist.end(), 0);
        for (std::size_t c = 0; c < labels.num_classes(); ++c) {
            const auto k = passed(grid_, preds.scores(i, c));
            ++pred_hist[k];
            if (labels.values(i, c) == 1.0) {
                ++truth_[i];
                ++hit_hist[k];
            }
        }
        if (truth_[i] == 0) throw DataError("record " + labels.record_ids[i] + " has no true labels");
        // classes with k > gi are predicted at threshold gi
        std::uint32_t pred_acc = 0, hit_acc = 0;
        for (std::size_t gi = g; gi-- > 0;) {
            pred_acc += pred_hist[gi + 1];
            hit_acc += hit_hist[gi + 1];
            predicted_[i * g + gi] = pred_acc;
            hits_[i * g + gi] = hit_acc;
        }
    }
}

template <typename Rows>
FmaxResult FmaxTable::evaluate_rows(const Rows& rows, std::size_t count) const {
    const std::size_t g = grid_.size();
    if (count == 0) throw DataError("no records to evaluate");
    std::vector<double> pr(g, 0.0), rc(g, 0.0);
    std::vector<std::size_t> n_tau(g, 0);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = rows(k);
        const double truth = truth_[i];
        for (std::size_t gi = 0; gi < g; ++gi) {
            const auto p = predicted_[i * g + gi];
            const auto h = hits_[i * g + gi];
            if (p > 0) {
                pr[gi] += static_cast<double>(h) / static_cast<double>(p);
                ++n_tau[gi];
            }
            rc[gi] += static_cast<double>(h) / truth;
        }
    }
    FmaxResult best{0.0, grid_[0]};
    bool first = true;
    for (std::size_t gi = 0; gi < g; ++gi) {
        SamplePrRc s;
        if (n_tau[gi] > 0) s.precision = pr[gi] / static_cast<double>(n_tau[gi]);
        s.recall = rc[gi] / static_cast<double>(count);
        const double f = s.f1();
        if (first || f > best.fmax) {
            best = {f, grid_[gi]};
            first = false;
        }
    }
    return best;
}

FmaxResult FmaxTable::evaluate() const {
    return evaluate_rows([](std::size_t k) { return k; }, truth_.size());
}

FmaxResult FmaxTable::evaluate(std::span<const std::uint32_t> rows) const {
    for (auto r : rows) {
        if (r >= truth_.size()) throw ArgumentError("row index out of range");
    }
    return evaluate_rows([&](std::size_t k) { return static_cast<std::size_t>(rows[k]); }, rows.size());
}

FmaxResult fmax(const PredictionMatrix& preds, const LabelMatrix& labels, const ThresholdGrid& grid) {
    return FmaxTable(preds, labels, grid).evaluate();
}

ConfusionCounts weighted_confusion(const PredictionMatrix& preds, const LabelMatrix& labels, double tau) {
    require_aligned(preds, labels);
    const std::size_t c_count = labels.num_classes();
    ConfusionCounts out;
    out.tp.assign(c_count, 0.0);
    out.fp.assign(c_count, 0.0);
    out.fn.assign(c_count, 0.0);
    out.tn.assign(c_count, 0.0);
    for (std::size_t i = 0; i < labels.num_records(); ++i) {
        const double w = 1.0 / static_cast<double>(std::max<std::size_t>(1, labels.row_count(i)));
        for (std::size_t c = 0; c < c_count; ++c) {
            const bool t = labels.values(i, c) == 1.0;
            const bool p = preds.scores(i, c) >= tau;
            (t ? (p ? out.tp : out.fn) : (p ? out.fp : out.tn))[c] += w;
        }
    }
    return out;
}

namespace {

template <typename Fn>
ClassScores per_class_scores(const ConfusionCounts& counts, double beta, Fn fn) {
    if (!(beta > 0.0)) throw ArgumentError("beta must be positive");
    ClassScores out;
    out.per_class.resize(counts.num_classes());
    double sum = 0.0;
    for (std::size_t c = 0; c < counts.num_classes(); ++c) {
        out.per_class[c] = fn(counts.tp[c], counts.fp[c], counts.fn[c]);
        sum += out.per_class[c];
    }
    out.macro = counts.num_classes() ? sum / static_cast<double>(counts.num_classes()) : 0.0;
    return out;
}

}  // namespace

ClassScores f_beta(const ConfusionCounts& counts, double beta) {
    const double b2 = beta * beta;
    return per_class_scores(counts, beta, [b2](double tp, double fp, double fn) {
        const double d = (1.0 + b2) * tp + fp + b2 * fn;
        return d > 0.0 ? (1.0 + b2) * tp / d : 0.0;
    });
}

ClassScores g_beta(const ConfusionCounts& counts, double beta) {
    return per_class_scores(counts, beta, [beta](double tp, double fp, double fn) {
        const double d = tp + fp + beta * fn;
        return d > 0.0 ? tp / d : 0.0;
    });
}

double optimize_threshold(const PredictionMatrix& preds, const LabelMatrix& labels, ThresholdMetric metric,
                          double beta, const ThresholdGrid& grid) {
    double best_tau = grid[0], best = -1.0;
    for (double tau : grid.values()) {
        const auto counts = weighted_confusion(preds, labels, tau);
        const double v = metric == ThresholdMetric::f_beta ? f_beta(counts, beta).macro : g_beta(counts, beta).macro;
        if (v > best) {
            best = v;
            best_tau = tau;
        }
    }
    return best_tau;
}

RegressionMetrics regression_metrics(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw DataError("predictions and targets differ in length");
    const std::size_t n = targets.size();
    if (n < 2) throw DataError("regression metrics need at least two values");
    double mean = 0.0;
    for (double y : targets) mean += y;
    mean /= static_cast<double>(n);
    double abs_err = 0.0, ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = predictions[i] - targets[i];
        abs_err += std::fabs(e);
        ss_res += e * e;
        ss_tot += (targets[i] - mean) * (targets[i] - mean);
    }
    if (ss_tot == 0.0) throw UndefinedMetric("R2 undefined: targets are constant");
    return {abs_err / static_cast<double>(n), 1.0 - ss_res / ss_tot};
}

BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const double> labels, double tau) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    if (scores.empty()) throw DataError("no records to evaluate");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] >= tau) == (labels[i] == 1.0);
    return {static_cast<double>(correct) / static_cast<double>(scores.size()), class_auc(scores, labels)};
}

AucTable::AucTable(const PredictionMatrix& preds, const LabelMatrix& labels)
    : num_records_(labels.num_records()), scores_(preds.scores), labels_(labels.values) {
    require_aligned(preds, labels);
    require_binary(labels.values.data());
    // stored column-major for contiguous per-class walks
    Matrix s(labels.num_classes(), num_records_), l(labels.num_classes(), num_records_);
    for (std::size_t i = 0; i < num_records_; ++i) {
        for (std::size_t c = 0; c < labels.num_classes(); ++c) {
            s(c, i) = preds.scores(i, c);
            l(c, i) = labels.values(i, c);
        }
    }
    scores_ = std::move(s);
    labels_ = std::move(l);
    for (std::size_t c = 0; c < labels.num_classes(); ++c) order_.push_back(ascending_order(scores_.row(c)));
}

std::optional<double> AucTable::class_auc(std::size_t c, std::span<const double> weights) const {
    return weighted_auc(order_.at(c), scores_.row(c), labels_.row(c), weights);
}

std::optional<double> AucTable::macro(std::span<const std::uint32_t> rows) const {
    std::vector<double> weights(num_records_, 0.0);
    for (auto r : rows) {
        if (r >= num_records_) throw ArgumentError("row index out of range");
        weights[r] += 1.0;
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < order_.size(); ++c) {
        const auto auc = class_auc(c, weights);
        if (!auc) return std::nullopt;
        sum += *auc;
    }
    if (order_.empty()) return std::nullopt;
    return sum / static_cast<double>(order_.size());
}

}  // namespace ecgbench
