#include "ecgbench/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "ecgbench/error.hpp"
#include "ecgbench/random.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench {

namespace {

struct Carrier {
    std::vector<std::size_t> records;
    std::map<std::size_t, std::size_t> labels;  // label index -> multiplicity
    bool validated = true;
};

// Greedy iterative stratification of carriers into bins of the given target
// sizes (in records). Returns the bin of each carrier.
std::vector<std::size_t> assign_carriers(const std::vector<Carrier>& carriers, std::size_t n_labels,
                                         const std::vector<std::size_t>& targets, const std::vector<bool>& clean_bin,
                                         bool strict_capacity, std::uint64_t seed) {
    const std::size_t bins = targets.size();
    const double n_records = static_cast<double>(std::accumulate(targets.begin(), targets.end(), std::size_t{0}));
    SplitMix64 rng(seed);

    std::vector<double> capacity(targets.begin(), targets.end());
    std::vector<double> label_total(n_labels, 0.0);
    std::vector<std::size_t> remaining(n_labels, 0);
    for (const auto& c : carriers) {
        for (const auto& [l, m] : c.labels) {
            label_total[l] += static_cast<double>(m);
            remaining[l] += m;
        }
    }
    std::vector<std::vector<double>> demand(bins, std::vector<double>(n_labels));
    for (std::size_t j = 0; j < bins; ++j) {
        for (std::size_t l = 0; l < n_labels; ++l) {
            demand[j][l] = label_total[l] * static_cast<double>(targets[j]) / n_records;
        }
    }

    std::vector<std::size_t> order(carriers.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);

    constexpr std::size_t unassigned = static_cast<std::size_t>(-1);
    std::vector<std::size_t> bin_of(carriers.size(), unassigned);

    const auto place = [&](std::size_t ci, std::optional<std::size_t> label) {
        const auto& c = carriers[ci];
        const double size = static_cast<double>(c.records.size());
        std::vector<std::size_t> eligible;
        for (std::size_t j = 0; j < bins; ++j) {
            if (!clean_bin[j] || c.validated) eligible.push_back(j);
        }
        if (eligible.empty()) throw DataError("no fold can take a carrier that is not human-validated");
        std::vector<std::size_t> roomy;
        for (auto j : eligible) {
            if (!strict_capacity || capacity[j] >= size) roomy.push_back(j);
        }
        auto& pool = roomy.empty() ? eligible : roomy;
        std::vector<std::size_t> best;
        for (auto j : pool) {
            if (best.empty()) {
                best.push_back(j);
                continue;
            }
            const auto b = best.front();
            const double dj = label ? demand[j][*label] : 0.0, db = label ? demand[b][*label] : 0.0;
            if (dj > db || (dj == db && capacity[j] > capacity[b])) best.assign(1, j);
            else if (dj == db && capacity[j] == capacity[b]) best.push_back(j);
        }
        const auto chosen = best.size() == 1 ? best[0] : best[rng.below(best.size())];
        bin_of[ci] = chosen;
        capacity[chosen] -= size;
        for (const auto& [l, m] : c.labels) {
            demand[chosen][l] -= static_cast<double>(m);
            remaining[l] -= m;
        }
    };

    for (;;) {
        std::optional<std::size_t> rarest;
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (remaining[l] > 0 && (!rarest || remaining[l] < remaining[*rarest])) rarest = l;
        }
        if (!rarest) break;
        std::vector<std::size_t> batch;
        for (auto ci : order) {
            if (bin_of[ci] == unassigned && carriers[ci].labels.count(*rarest)) batch.push_back(ci);
        }
        // non-validated carriers first so validated ones are left for the clean folds
        std::stable_partition(batch.begin(), batch.end(), [&](std::size_t ci) { return !carriers[ci].validated; });
        for (auto ci : batch) place(ci, rarest);
    }
    std::vector<std::size_t> rest;
    for (auto ci : order) {
        if (bin_of[ci] == unassigned) rest.push_back(ci);
    }
    std::stable_partition(rest.begin(), rest.end(), [&](std::size_t ci) { return !carriers[ci].validated; });
    for (auto ci : rest) place(ci, std::nullopt);
    return bin_of;
}

std::vector<std::size_t> equal_targets(std::size_t n, std::size_t bins) {
    std::vector<std::size_t> t(bins, n / bins);
    for (std::size_t j = 0; j < n % bins; ++j) ++t[j];
    return t;
}

std::vector<Carrier> make_carriers(std::span<const Record> records, std::span<const std::size_t> subset, SplitMode mode,
                                   std::map<std::string, std::size_t>& label_index) {
    for (auto i : subset) {
        for (const auto& s : records[i].statements) label_index.emplace(s.code, 0);
    }
    std::size_t next = 0;
    for (auto& [code, idx] : label_index) idx = next++;

    std::vector<Carrier> carriers;
    std::unordered_map<std::string, std::size_t> by_patient;
    for (auto i : subset) {
        const auto& r = records[i];
        std::size_t ci;
        if (mode == SplitMode::patient) {
            if (r.patient_id.empty()) throw DataError("record " + r.record_id + " has no patient id");
            auto [it, fresh] = by_patient.emplace(r.patient_id, carriers.size());
            if (fresh) carriers.emplace_back();
            ci = it->second;
        } else {
            ci = carriers.size();
            carriers.emplace_back();
        }
        auto& c = carriers[ci];
        c.records.push_back(i);
        c.validated = c.validated && r.validated_by_human;
        for (const auto& s : r.statements) ++c.labels[label_index.at(s.code)];
    }
    return carriers;
}

}  // namespace

SplitMode parse_split_mode(std::string_view name) {
    if (name == "patient") return SplitMode::patient;
    if (name == "record") return SplitMode::record;
    throw ArgumentError("unknown split mode: " + std::string(name));
}

FoldAssignment stratified_folds(std::span<const Record> records, const SplitOptions& options) {
    const std::size_t k = options.k;
    if (k < 2) throw ArgumentError("need at least two folds");
    if ((options.clean_tail || options.keep_existing_tail) && k < 3) {
        throw ArgumentError("clean folds need at least three folds");
    }
    if (records.empty()) throw DataError("no records to split");

    FoldAssignment out;
    out.k = k;
    out.folds.assign(records.size(), 0);
    for (const auto& r : records) out.record_ids.push_back(r.record_id);

    std::vector<std::size_t> free_records;
    std::size_t bins = k;
    if (options.keep_existing_tail) {
        std::unordered_map<std::string, int> patient_tail;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const int f = records[i].fold;
            const bool tail = f == static_cast<int>(k) - 1 || f == static_cast<int>(k);
            if (tail) out.folds[i] = f;
            else free_records.push_back(i);
            if (options.mode == SplitMode::patient) {
                auto [it, fresh] = patient_tail.emplace(records[i].patient_id, tail);
                if (!fresh && it->second != tail) {
                    throw DataError("patient " + records[i].patient_id + " has records inside and outside the kept folds");
                }
            }
        }
        bins = k - 2;
    } else {
        free_records.resize(records.size());
        std::iota(free_records.begin(), free_records.end(), 0);
    }
    if (free_records.empty()) return out;

    std::map<std::string, std::size_t> label_index;
    const auto carriers = make_carriers(records, free_records, options.mode, label_index);
    const auto targets = equal_targets(free_records.size(), bins);
    std::vector<bool> clean(bins, false);
    if (options.clean_tail && !options.keep_existing_tail) {
        clean[k - 2] = clean[k - 1] = true;
        std::size_t validated = 0;
        for (const auto& c : carriers) validated += c.validated ? c.records.size() : 0;
        if (validated < targets[k - 2] + targets[k - 1]) {
            throw DataError("only " + std::to_string(validated) + " human-validated records; the two clean folds need " +
                            std::to_string(targets[k - 2] + targets[k - 1]));
        }
    }
    const auto bin_of = assign_carriers(carriers, label_index.size(), targets, clean, false, options.seed);
    for (std::size_t ci = 0; ci < carriers.size(); ++ci) {
        for (auto i : carriers[ci].records) out.folds[i] = static_cast<int>(bin_of[ci]) + 1;
    }
    return out;
}

std::string FoldAssignment::serialize() const {
    std::string out = "record_id,fold\n";
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        out += csv_escape(record_ids[i]) + ',' + std::to_string(folds[i]) + '\n';
    }
    return out;
}

FoldAssignment FoldAssignment::parse(std::string_view text) {
    const auto table = parse_csv(text);
    const auto id = table.find_any({"record_id", "ecg_id"});
    const auto fold = table.find_any({"fold", "strat_fold"});
    if (!id || !fold) throw DataError("fold file needs record_id and fold columns");
    FoldAssignment out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto f = parse_int(table.rows[r][*fold]);
        if (!f || *f < 1) throw DataError("row " + std::to_string(r + 1) + ": invalid fold");
        out.record_ids.push_back(table.rows[r][*id]);
        out.folds.push_back(static_cast<int>(*f));
        out.k = std::max(out.k, static_cast<std::size_t>(*f));
    }
    return out;
}

SplitRoles split_roles(const FoldAssignment& folds) {
    const auto k = static_cast<int>(folds.k);
    if (k < 3) throw ArgumentError("train/val/test roles need at least three folds");
    SplitRoles roles;
    for (std::size_t i = 0; i < folds.folds.size(); ++i) {
        const int f = folds.folds[i];
        if (f < 1 || f > k) throw DataError("fold " + std::to_string(f) + " outside 1.." + std::to_string(k));
        (f == k ? roles.test : f == k - 1 ? roles.val : roles.train).push_back(i);
    }
    return roles;
}

std::vector<std::size_t> subsample_train(std::span<const Record> train, double folds_worth, std::uint64_t seed,
                                         std::size_t k) {
    if (k < 3) throw ArgumentError("need at least three folds");
    if (!(folds_worth > 0.0)) throw ArgumentError("subsample size must be positive");
    const double n = static_cast<double>(train.size());
    const auto m = static_cast<std::size_t>(std::llround(n * folds_worth / static_cast<double>(k - 2)));
    if (m < 1) throw ArgumentError("requested fraction yields no records");
    if (m > train.size()) throw ArgumentError("requested fraction exceeds the training set");
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    if (m == train.size()) return all;

    std::map<std::string, std::size_t> label_index;
    const auto carriers = make_carriers(train, all, SplitMode::record, label_index);
    const auto bin_of = assign_carriers(carriers, label_index.size(), {m, train.size() - m}, {false, false}, true, seed);
    std::vector<std::size_t> out;
    for (std::size_t ci = 0; ci < carriers.size(); ++ci) {
        if (bin_of[ci] == 0) out.push_back(carriers[ci].records[0]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void apply_folds(std::vector<Record>& records, const FoldAssignment& folds) {
    std::unordered_map<std::string, int> fold_of;
    for (std::size_t i = 0; i < folds.record_ids.size(); ++i) fold_of[folds.record_ids[i]] = folds.folds[i];
    for (auto& r : records) {
        const auto it = fold_of.find(r.record_id);
        if (it == fold_of.end()) throw DataError("no fold for record " + r.record_id);
        r.fold = it->second;
    }
}

}  // namespace ecgbench
