#include "ecgbench/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "ecgbench/bootstrap.hpp"
#include "ecgbench/error.hpp"
#include "ecgbench/metrics.hpp"
#include "ecgbench/random.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
    return d;
}

// Nearest centroid with ties to the lower index; returns total inertia.
double assign(const Matrix& x, const Matrix& centroids, std::vector<std::size_t>& cluster) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = sq_dist(x.row(i), centroids.row(c));
            if (d < best) {
                best = d;
                cluster[i] = c;
            }
        }
        inertia += best;
    }
    return inertia;
}

Matrix plus_plus_seeds(const Matrix& x, std::size_t k, SplitMix64& rng) {
    const std::size_t n = x.rows();
    Matrix centroids(k, x.cols());
    auto first = x.row(rng.below(n));
    std::copy(first.begin(), first.end(), centroids.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), centroids.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);  // all points coincide with chosen centroids
        }
        auto row = x.row(pick);
        std::copy(row.begin(), row.end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), centroids.row(c)));
    }
    return centroids;
}

ClusterAssignment lloyd(const Matrix& x, Matrix centroids, const KMeansOptions& o) {
    const std::size_t n = x.rows(), d = x.cols(), k = centroids.rows();
    ClusterAssignment out;
    out.k = k;
    out.cluster.assign(n, 0);
    for (std::size_t iter = 0; iter < o.max_iter; ++iter) {
        out.inertia_history.push_back(assign(x, centroids, out.cluster));
        Matrix next(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = next.row(out.cluster[i]);
            auto src = x.row(i);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            ++counts[out.cluster[i]];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // empty cluster keeps its centroid
                std::copy(centroids.row(c).begin(), centroids.row(c).end(), next.row(c).begin());
                continue;
            }
            for (auto& v : next.row(c)) v /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(sq_dist(next.row(c), centroids.row(c))));
        }
        centroids = std::move(next);
        if (shift < o.tol) break;
    }
    out.inertia = assign(x, centroids, out.cluster);
    out.inertia_history.push_back(out.inertia);
    out.centroids = std::move(centroids);
    return out;
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, const KMeansOptions& options) {
    if (points.cols() == 0) throw ArgumentError("k-means needs at least one feature dimension");
    if (options.k == 0) throw ArgumentError("k must be at least 1");
    if (options.k > points.rows()) {
        throw ArgumentError("k = " + std::to_string(options.k) + " exceeds the number of points (" +
                            std::to_string(points.rows()) + ")");
    }
    if (options.n_init == 0) throw ArgumentError("n_init must be at least 1");
    std::optional<ClusterAssignment> best;
    for (std::size_t run = 0; run < options.n_init; ++run) {
        SplitMix64 rng(mix_seed(options.seed, run));
        auto result = lloyd(points, plus_plus_seeds(points, options.k, rng), options);
        if (!best || result.inertia < best->inertia) best = std::move(result);
    }
    return std::move(*best);
}

StratificationReport stratify_class(const PredictionMatrix& preds, const LabelMatrix& labels,
                                    const std::string& target_class, const KMeansOptions& options) {
    require_aligned(preds, labels);
    const auto it = std::find(labels.class_codes.begin(), labels.class_codes.end(), target_class);
    if (it == labels.class_codes.end()) throw ArgumentError("unknown class: " + target_class);
    const auto t = static_cast<std::size_t>(it - labels.class_codes.begin());

    StratificationReport report;
    report.target_class = target_class;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.num_records(); ++i) (labels.values(i, t) == 1.0 ? pos : neg).push_back(i);
    report.positives = pos.size();
    report.negatives = neg.size();
    if (pos.size() < options.k) {
        throw ArgumentError("class " + target_class + " has " + std::to_string(pos.size()) +
                            " positives, fewer than k = " + std::to_string(options.k));
    }
    if (neg.empty()) throw UndefinedMetric("class " + target_class + " has no negatives");
    const auto scores = preds.scores.column(t);
    report.overall_auc = class_auc(scores, labels.values.column(t));

    const Matrix x = preds.scores.select_rows(std::span<const std::size_t>(pos));
    const auto clusters = kmeans(x, options);

    // renumber by first appearance and drop empty clusters
    std::vector<std::size_t> remap(clusters.k, clusters.k);
    std::size_t used = 0;
    for (auto c : clusters.cluster) {
        if (remap[c] == clusters.k) remap[c] = used++;
    }
    if (used < options.k) {
        report.warning = "degenerate clustering: positives form only " + std::to_string(used) +
                         " distinct group(s); reporting " + std::to_string(used) + " effective cluster(s)";
    }
    for (std::size_t p = 0; p < pos.size(); ++p) {
        report.positive_ids.push_back(labels.record_ids[pos[p]]);
        report.cluster_of.push_back(remap[clusters.cluster[p]]);
    }

    report.clusters.resize(used);
    for (std::size_t c = 0; c < used; ++c) {
        std::vector<double> s, y;
        for (auto i : neg) {
            s.push_back(scores[i]);
            y.push_back(0.0);
        }
        auto& summary = report.clusters[c];
        std::vector<std::size_t> members;
        for (std::size_t p = 0; p < pos.size(); ++p) {
            if (report.cluster_of[p] != c) continue;
            members.push_back(pos[p]);
            s.push_back(scores[pos[p]]);
            y.push_back(1.0);
        }
        summary.size = members.size();
        summary.auc = class_auc(s, y);
        for (std::size_t k = 0; k < labels.num_classes(); ++k) {
            if (k == t) continue;
            std::size_t with = 0;
            for (auto i : members) with += labels.values(i, k) == 1.0;
            summary.cooccurrence[labels.class_codes[k]] = static_cast<double>(with) / static_cast<double>(members.size());
        }
    }
    return report;
}

std::string StratificationReport::render_summary() const {
    std::string out = "cluster,size,auc,cooccurring\n";
    out += "all," + std::to_string(positives) + ',' + format_double(overall_auc) + ",\n";
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        std::vector<std::pair<double, std::string>> top;
        for (const auto& [code, f] : clusters[c].cooccurrence) {
            if (f > 0.0) top.emplace_back(-f, code);
        }
        std::sort(top.begin(), top.end());
        std::string co;
        for (std::size_t k = 0; k < std::min<std::size_t>(5, top.size()); ++k) {
            char buf[32];
            std::snprintf(buf, sizeof buf, ":%.3f", -top[k].first);
            co += (k ? ";" : "") + top[k].second + buf;
        }
        out += std::to_string(c) + ',' + std::to_string(clusters[c].size) + ',' +
               (clusters[c].auc ? format_double(*clusters[c].auc) : "n/a") + ',' + csv_escape(co) + '\n';
    }
    return out;
}

std::string StratificationReport::render_assignments() const {
    std::string out = "record_id,class,cluster\n";
    for (std::size_t p = 0; p < positive_ids.size(); ++p) {
        out += csv_escape(positive_ids[p]) + ',' + csv_escape(target_class) + ',' + std::to_string(cluster_of[p]) + '\n';
    }
    return out;
}

EnsembleStats ensemble_uncertainty(std::span<const PredictionMatrix> members) {
    if (members.size() < 2) throw ArgumentError("ensemble standard deviation needs at least two members");
    const auto& first = members[0];
    std::vector<PredictionMatrix> aligned;
    aligned.reserve(members.size());
    const std::set<std::string> codes(first.class_codes.begin(), first.class_codes.end());
    for (const auto& m : members) {
        if (m.num_records() != first.num_records() || m.num_classes() != first.num_classes() ||
            std::set<std::string>(m.class_codes.begin(), m.class_codes.end()) != codes) {
            throw DataError("ensemble members differ in records or classes");
        }
        aligned.push_back(align_to(m, first.record_ids, first.class_codes));
    }
    const double m_count = static_cast<double>(members.size());
    EnsembleStats out{first, first};
    for (std::size_t k = 0; k < first.scores.data().size(); ++k) {
        double sum = 0.0, lo = aligned[0].scores.data()[k], hi = lo;
        for (const auto& a : aligned) {
            const double v = a.scores.data()[k];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        // rounding can push the mean of equal values off the common value
        const double mean = std::clamp(sum / m_count, lo, hi);
        double ss = 0.0;
        for (const auto& a : aligned) ss += (a.scores.data()[k] - mean) * (a.scores.data()[k] - mean);
        out.mean.scores.data()[k] = mean;
        out.std.scores.data()[k] = std::sqrt(ss / (m_count - 1.0));
    }
    return out;
}

UncertaintyTable uncertainty_vs_likelihood(const EnsembleStats& stats, const LabelMatrix& labels) {
    if (!labels.has_likelihoods()) throw DataError("labels carry no likelihoods");
    require_aligned(stats.std, labels);
    require_aligned(stats.mean, labels);
    UncertaintyTable table;
    std::map<double, std::vector<double>> by_bucket{{15, {}}, {35, {}}, {50, {}}, {80, {}}, {100, {}}};
    for (std::size_t i = 0; i < labels.num_records(); ++i) {
        for (std::size_t c = 0; c < labels.num_classes(); ++c) {
            const double lk = labels.likelihoods(i, c);
            if (labels.values(i, c) != 1.0 || lk == 0.0) continue;
            table.rows.push_back({labels.record_ids[i], labels.class_codes[c], lk, stats.mean.scores(i, c),
                                  stats.std.scores(i, c)});
            by_bucket[lk].push_back(stats.std.scores(i, c));
        }
    }
    if (table.rows.empty()) throw DataError("no positive labels with a recorded likelihood");
    for (auto& [lk, values] : by_bucket) {
        BucketSummary b;
        b.likelihood = lk;
        b.count = values.size();
        if (!values.empty()) {
            b.quantiles = std::array<double, 5>{percentile(values, 5), percentile(values, 25), percentile(values, 50),
                                                percentile(values, 75), percentile(values, 95)};
        }
        table.buckets.push_back(b);
    }
    return table;
}

std::string UncertaintyTable::render_rows() const {
    std::string out = "record_id,class,likelihood,ensemble_mean,ensemble_std\n";
    for (const auto& r : rows) {
        out += csv_escape(r.record_id) + ',' + csv_escape(r.class_code) + ',' + format_double(r.likelihood) + ',' +
               format_double(r.mean) + ',' + format_double(r.std) + '\n';
    }
    return out;
}

std::string UncertaintyTable::render_buckets() const {
    std::string out = "likelihood,count,q05,q25,q50,q75,q95\n";
    for (const auto& b : buckets) {
        out += format_double(b.likelihood) + ',' + std::to_string(b.count);
        for (std::size_t q = 0; q < 5; ++q) out += ',' + (b.quantiles ? format_double((*b.quantiles)[q]) : std::string());
        out += '\n';
    }
    return out;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double pos = 0, neg = 0;
    for (double y : labels) {
        if (y != 0.0 && y != 1.0) throw DataError("labels must be 0 or 1");
        (y == 1.0 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw UndefinedMetric("ROC curve needs positives and negatives");
    std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] == 1.0 ? tp : fp) += 1;
        out.push_back({t, fp / neg, tp / pos});
    }
    return out;
}

}  // namespace ecgbench
