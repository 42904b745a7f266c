#include "ecgbench/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ecgbench/error.hpp"

namespace ecgbench {

bool Record::has_statement(std::string_view code) const {
    return std::any_of(statements.begin(), statements.end(), [&](const Statement& s) { return s.code == code; });
}

Ontology::Ontology(std::vector<StatementInfo> statements, const std::vector<std::string>& allowed_superclasses)
    : statements_(std::move(statements)) {
    if (statements_.empty()) throw DataError("ontology is empty");
    for (std::size_t i = 0; i < statements_.size(); ++i) {
        const auto& s = statements_[i];
        if (s.code.empty()) throw DataError("ontology row " + std::to_string(i + 1) + " has an empty code");
        if (!index_.emplace(s.code, i).second) throw DataError("duplicate statement code in ontology: " + s.code);
        if (!s.is_diagnostic) continue;
        if (!s.diagnostic_superclass || s.diagnostic_superclass->empty()) {
            throw DataError("diagnostic statement " + s.code + " has no superclass");
        }
        const auto& super = *s.diagnostic_superclass;
        if (std::find(allowed_superclasses.begin(), allowed_superclasses.end(), super) == allowed_superclasses.end()) {
            throw DataError("statement " + s.code + " has unknown superclass " + super);
        }
        if (s.diagnostic_subclass && !s.diagnostic_subclass->empty()) {
            auto [it, inserted] = sub_to_super_.emplace(*s.diagnostic_subclass, super);
            if (!inserted && it->second != super) {
                throw DataError("subclass " + it->first + " maps to both " + it->second + " and " + super);
            }
        }
    }
}

bool Ontology::contains(std::string_view code) const { return index_.find(code) != index_.end(); }

const StatementInfo& Ontology::at(std::string_view code) const {
    auto it = index_.find(code);
    if (it == index_.end()) throw DataError("unknown statement code: " + std::string(code));
    return statements_[it->second];
}

namespace {

template <typename Pred>
std::vector<std::string> sorted_codes(const std::vector<StatementInfo>& statements, Pred pred) {
    std::vector<std::string> out;
    for (const auto& s : statements) {
        if (pred(s)) out.push_back(s.code);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::string> Ontology::all_codes() const {
    return sorted_codes(statements_, [](const auto&) { return true; });
}
std::vector<std::string> Ontology::diagnostic_codes() const {
    return sorted_codes(statements_, [](const auto& s) { return s.is_diagnostic; });
}
std::vector<std::string> Ontology::form_codes() const {
    return sorted_codes(statements_, [](const auto& s) { return s.is_form; });
}
std::vector<std::string> Ontology::rhythm_codes() const {
    return sorted_codes(statements_, [](const auto& s) { return s.is_rhythm; });
}

std::vector<std::string> Ontology::subclasses() const {
    std::vector<std::string> out;
    for (const auto& [sub, super] : sub_to_super_) out.push_back(sub);
    return out;  // map keys are already sorted
}

std::vector<std::string> Ontology::superclasses() const {
    std::set<std::string> set;
    for (const auto& s : statements_) {
        if (s.is_diagnostic) set.insert(*s.diagnostic_superclass);
    }
    return {set.begin(), set.end()};
}

const std::string& Ontology::superclass_of_subclass(std::string_view subclass) const {
    auto it = sub_to_super_.find(subclass);
    if (it == sub_to_super_.end()) throw DataError("unknown diagnostic subclass: " + std::string(subclass));
    return it->second;
}

TaskName parse_task_name(std::string_view name) {
    static const std::pair<std::string_view, TaskName> names[] = {
        {"all", TaskName::all},         {"diag", TaskName::diag},       {"sub-diag", TaskName::sub_diag},
        {"super-diag", TaskName::super_diag}, {"form", TaskName::form}, {"rhythm", TaskName::rhythm},
        {"quality", TaskName::quality}, {"age", TaskName::age},         {"gender", TaskName::gender},
    };
    for (const auto& [n, t] : names) {
        if (n == name) return t;
    }
    throw ArgumentError("unknown task name: " + std::string(name));
}

std::string to_string(TaskName name) {
    switch (name) {
        case TaskName::all: return "all";
        case TaskName::diag: return "diag";
        case TaskName::sub_diag: return "sub-diag";
        case TaskName::super_diag: return "super-diag";
        case TaskName::form: return "form";
        case TaskName::rhythm: return "rhythm";
        case TaskName::quality: return "quality";
        case TaskName::age: return "age";
        case TaskName::gender: return "gender";
    }
    return "?";
}

bool is_statement_task(TaskName name) {
    return name != TaskName::quality && name != TaskName::age && name != TaskName::gender;
}

TaskSpec make_task_spec(TaskName name, const Ontology& ontology) {
    TaskSpec spec{name, {}};
    switch (name) {
        case TaskName::all: spec.class_list = ontology.all_codes(); break;
        case TaskName::diag: spec.class_list = ontology.diagnostic_codes(); break;
        case TaskName::sub_diag: spec.class_list = ontology.subclasses(); break;
        case TaskName::super_diag: spec.class_list = ontology.superclasses(); break;
        case TaskName::form: spec.class_list = ontology.form_codes(); break;
        case TaskName::rhythm: spec.class_list = ontology.rhythm_codes(); break;
        case TaskName::quality: spec.class_list = {"artifact"}; break;
        case TaskName::age: spec.class_list = {"age"}; break;
        case TaskName::gender: spec.class_list = {"female"}; break;
    }
    return spec;
}

std::size_t LabelMatrix::row_count(std::size_t i) const {
    std::size_t n = 0;
    for (double v : values.row(i)) n += v != 0.0 ? 1 : 0;
    return n;
}

LabelMatrix LabelMatrix::select_rows(std::span<const std::size_t> rows) const {
    LabelMatrix out;
    out.class_codes = class_codes;
    out.record_ids.reserve(rows.size());
    for (auto r : rows) out.record_ids.push_back(record_ids[r]);
    out.values = values.select_rows(rows);
    if (has_likelihoods()) out.likelihoods = likelihoods.select_rows(rows);
    return out;
}

PredictionMatrix PredictionMatrix::select_rows(std::span<const std::size_t> rows) const {
    PredictionMatrix out;
    out.class_codes = class_codes;
    out.record_ids.reserve(rows.size());
    for (auto r : rows) out.record_ids.push_back(record_ids[r]);
    out.scores = scores.select_rows(rows);
    return out;
}

void require_aligned(const PredictionMatrix& preds, const LabelMatrix& labels) {
    if (preds.class_codes != labels.class_codes) {
        throw DataError("prediction and label class codes differ");
    }
    if (preds.record_ids != labels.record_ids) {
        throw DataError("prediction and label record ids differ (use align_to first)");
    }
    if (preds.scores.rows() != labels.values.rows() || preds.scores.cols() != labels.values.cols()) {
        throw DataError("prediction and label matrix shapes differ");
    }
}

namespace {

std::unordered_map<std::string, std::size_t> index_of(std::span<const std::string> keys, const char* what) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!idx.emplace(keys[i], i).second) throw DataError(std::string("duplicate ") + what + ": " + keys[i]);
    }
    return idx;
}

}  // namespace

PredictionMatrix align_to(const PredictionMatrix& preds, std::span<const std::string> record_ids,
                          std::span<const std::string> class_codes) {
    const auto row_idx = index_of(preds.record_ids, "record id");
    const auto col_idx = index_of(preds.class_codes, "class code");
    std::vector<std::size_t> rows, cols;
    for (const auto& id : record_ids) {
        auto it = row_idx.find(id);
        if (it == row_idx.end()) throw DataError("predictions lack record " + id);
        rows.push_back(it->second);
    }
    for (const auto& c : class_codes) {
        auto it = col_idx.find(c);
        if (it == col_idx.end()) throw DataError("predictions lack class " + c);
        cols.push_back(it->second);
    }
    PredictionMatrix out;
    out.record_ids.assign(record_ids.begin(), record_ids.end());
    out.class_codes.assign(class_codes.begin(), class_codes.end());
    out.scores = Matrix(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out.scores(i, j) = preds.scores(rows[i], cols[j]);
    }
    return out;
}

namespace {

void require_known(const Record& record, const Ontology& ontology) {
    for (const auto& s : record.statements) {
        if (!ontology.contains(s.code)) {
            throw DataError("record " + record.record_id + " has unknown statement code " + s.code);
        }
    }
}

}  // namespace

std::vector<std::string> record_labels(const Record& record, const Ontology& ontology, TaskName task) {
    require_known(record, ontology);
    std::set<std::string> labels;
    for (const auto& s : record.statements) {
        const auto& info = ontology.at(s.code);
        switch (task) {
            case TaskName::all: labels.insert(s.code); break;
            case TaskName::diag:
                if (info.is_diagnostic) labels.insert(s.code);
                break;
            case TaskName::sub_diag:
                if (info.is_diagnostic && info.diagnostic_subclass && !info.diagnostic_subclass->empty()) {
                    labels.insert(*info.diagnostic_subclass);
                }
                break;
            case TaskName::super_diag:
                if (info.is_diagnostic) labels.insert(*info.diagnostic_superclass);
                break;
            case TaskName::form:
                if (info.is_form) labels.insert(s.code);
                break;
            case TaskName::rhythm:
                if (info.is_rhythm) labels.insert(s.code);
                break;
            default: throw ArgumentError("record_labels: " + to_string(task) + " is not a statement task");
        }
    }
    return {labels.begin(), labels.end()};
}

std::array<std::size_t, 5> label_count_histogram(std::span<const Record> records, const Ontology& ontology,
                                                 TaskName task) {
    std::array<std::size_t, 5> hist{};
    for (const auto& r : records) {
        const auto n = record_labels(r, ontology, task).size();
        ++hist[std::min<std::size_t>(n, 4)];
    }
    return hist;
}

namespace {

// Likelihood recorded for a label: for statement-level tasks the statement's
// own value; for aggregated levels the maximum over contributing statements.
double aggregated_likelihood(const Record& record, const Ontology& ontology, TaskName task, const std::string& label) {
    double best = 0.0;
    for (const auto& s : record.statements) {
        const auto& info = ontology.at(s.code);
        bool contributes = false;
        switch (task) {
            case TaskName::sub_diag: contributes = info.is_diagnostic && info.diagnostic_subclass == label; break;
            case TaskName::super_diag: contributes = info.is_diagnostic && info.diagnostic_superclass == label; break;
            default: contributes = s.code == label; break;
        }
        if (contributes) best = std::max(best, s.likelihood);
    }
    return best;
}

}  // namespace

TaskResult build_task(std::span<const Record> records, const Ontology& ontology, const TaskSpec& task) {
    TaskResult result;
    auto& labels = result.labels;
    labels.class_codes = task.class_list;
    if (labels.class_codes.empty()) throw ArgumentError("task " + to_string(task.name) + " has no classes");

    if (task.name == TaskName::quality) {
        result.labels = build_quality_target(records);
        result.kept_record_ids = result.labels.record_ids;
        return result;
    }

    if (task.name == TaskName::age || task.name == TaskName::gender) {
        std::vector<double> values;
        for (const auto& r : records) {
            if (task.name == TaskName::age) {
                if (!r.age) continue;
                result.targets.push_back(*r.age);
                values.push_back(0.0);
            } else {
                if (r.sex == Sex::unknown) continue;
                values.push_back(r.sex == Sex::female ? 1.0 : 0.0);
            }
            labels.record_ids.push_back(r.record_id);
        }
        if (labels.record_ids.empty()) throw DataError("task " + to_string(task.name) + " keeps no records");
        if (task.name == TaskName::age) {
            labels.class_codes.clear();
            labels.values = Matrix(labels.record_ids.size(), 0);
        } else {
            labels.values = Matrix(values.size(), 1);
            for (std::size_t i = 0; i < values.size(); ++i) labels.values(i, 0) = values[i];
        }
        result.kept_record_ids = labels.record_ids;
        return result;
    }

    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < labels.class_codes.size(); ++c) column.emplace(labels.class_codes[c], c);

    std::vector<std::vector<std::size_t>> kept_cols;
    std::vector<std::size_t> kept_rows;
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::vector<std::size_t> cols;
        for (const auto& l : record_labels(records[i], ontology, task.name)) {
            auto it = column.find(l);
            if (it != column.end()) cols.push_back(it->second);
        }
        if (cols.empty()) continue;
        kept_rows.push_back(i);
        kept_cols.push_back(std::move(cols));
    }
    if (kept_rows.empty()) throw DataError("task " + to_string(task.name) + " keeps no records");

    const std::size_t n = kept_rows.size();
    const std::size_t c = labels.class_codes.size();
    labels.values = Matrix(n, c);
    labels.likelihoods = Matrix(n, c);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& rec = records[kept_rows[k]];
        labels.record_ids.push_back(rec.record_id);
        for (auto col : kept_cols[k]) {
            labels.values(k, col) = 1.0;
            labels.likelihoods(k, col) = aggregated_likelihood(rec, ontology, task.name, labels.class_codes[col]);
        }
    }
    result.kept_record_ids = labels.record_ids;
    return result;
}

LabelMatrix build_quality_target(std::span<const Record> records) {
    LabelMatrix out;
    out.class_codes = {"artifact"};
    out.values = Matrix(records.size(), 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& q = records[i].quality;
        out.record_ids.push_back(records[i].record_id);
        const bool artifact = q.has(QualityFlag::static_noise) || q.has(QualityFlag::burst_noise) ||
                              q.has(QualityFlag::baseline_drift);
        out.values(i, 0) = artifact ? 1.0 : 0.0;
    }
    return out;
}

double positive_fraction(const LabelMatrix& labels, std::size_t column) {
    if (labels.num_records() == 0) return 0.0;
    double pos = 0.0;
    for (std::size_t i = 0; i < labels.num_records(); ++i) pos += labels.values(i, column);
    return pos / static_cast<double>(labels.num_records());
}

Subpopulation parse_subpopulation(std::string_view name) {
    if (name == "all") return Subpopulation::all;
    if (name == "healthy") return Subpopulation::healthy;
    if (name == "non-healthy") return Subpopulation::non_healthy;
    throw ArgumentError("unknown subpopulation: " + std::string(name));
}

std::vector<bool> subpopulation_mask(std::span<const Record> records, const Ontology& ontology, Subpopulation which) {
    std::vector<bool> mask(records.size(), true);
    if (which == Subpopulation::all) return mask;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto diag = record_labels(records[i], ontology, TaskName::diag);
        const bool healthy = diag.size() == 1 && diag.front() == "NORM";
        mask[i] = which == Subpopulation::healthy ? healthy : !healthy;
    }
    return mask;
}

PredictionMatrix ensemble_average(std::span<const PredictionMatrix> preds) {
    if (preds.empty()) throw ArgumentError("ensemble_average needs at least one prediction matrix");
    const auto& first = preds.front();
    const std::set<std::string> first_codes(first.class_codes.begin(), first.class_codes.end());
    std::vector<PredictionMatrix> aligned;
    aligned.reserve(preds.size() - 1);
    for (std::size_t m = 1; m < preds.size(); ++m) {
        const std::set<std::string> codes(preds[m].class_codes.begin(), preds[m].class_codes.end());
        if (codes != first_codes || preds[m].class_codes.size() != first.class_codes.size()) {
            throw DataError("ensemble member " + std::to_string(m) + " has a different class set");
        }
        if (preds[m].record_ids.size() != first.record_ids.size()) {
            throw DataError("ensemble member " + std::to_string(m) + " has a different record count");
        }
        if (preds[m].record_ids == first.record_ids && preds[m].class_codes == first.class_codes) {
            aligned.push_back(preds[m]);
        } else {
            aligned.push_back(align_to(preds[m], first.record_ids, first.class_codes));
        }
    }
    PredictionMatrix out = first;
    auto dst = out.scores.data();
    const double count = static_cast<double>(preds.size());
    for (std::size_t k = 0; k < dst.size(); ++k) {
        double sum = dst[k], lo = dst[k], hi = dst[k];
        for (const auto& a : aligned) {
            const double v = a.scores.data()[k];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        // rounding in the sum can push the mean a ulp outside the member range
        dst[k] = std::clamp(sum / count, lo, hi);
    }
    return out;
}

std::vector<Record> filter_by_folds(std::span<const Record> records, const std::set<int>& folds) {
    std::vector<Record> out;
    for (const auto& r : records) {
        if (folds.count(r.fold)) out.push_back(r);
    }
    return out;
}

}  // namespace ecgbench
