#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgbench/matrix.hpp"

namespace ecgbench {

enum class Sex : std::uint8_t { male, female, unknown };

enum class QualityFlag : std::uint8_t {
    static_noise = 1,
    burst_noise = 2,
    baseline_drift = 4,
    electrode_problem = 8,
};

class QualityFlags {
public:
    void set(QualityFlag f) { bits_ |= static_cast<std::uint8_t>(f); }
    bool has(QualityFlag f) const { return (bits_ & static_cast<std::uint8_t>(f)) != 0; }
    bool empty() const { return bits_ == 0; }
    std::uint8_t bits() const { return bits_; }
    bool operator==(const QualityFlags&) const = default;

private:
    std::uint8_t bits_ = 0;
};

struct Statement {
    std::string code;
    double likelihood = 0.0;  // 0..100; 0 means "unknown" in PTB-XL, still a present label
    bool operator==(const Statement&) const = default;
};

// Multichannel signal in physical units (millivolts), leads x samples.
struct Signal {
    Matrix samples;
    double sampling_rate = 0.0;
    std::vector<std::string> lead_names;
};

struct Record {
    std::string record_id;
    std::string patient_id;
    std::optional<double> age;
    Sex sex = Sex::unknown;
    int fold = 0;  // 0 = not assigned yet
    bool validated_by_human = false;
    int sampling_rate = 100;
    std::vector<Statement> statements;
    QualityFlags quality;
    // Waveform header paths (without the .hea suffix), relative to the data
    // directory, keyed by sampling rate.
    std::map<int, std::string> signal_files;
    std::optional<Signal> signal;

    bool has_statement(std::string_view code) const;
};

// Category flags and diagnostic hierarchy for one statement code.
struct StatementInfo {
    std::string code;
    std::string description;
    bool is_diagnostic = false;
    bool is_form = false;
    bool is_rhythm = false;
    std::optional<std::string> diagnostic_subclass;
    std::optional<std::string> diagnostic_superclass;
};

inline const std::vector<std::string>& default_superclasses() {
    static const std::vector<std::string> codes{"CD", "HYP", "MI", "NORM", "STTC"};
    return codes;
}

// Statement ontology. Validated on construction: codes unique, every
// diagnostic code has a superclass drawn from `allowed_superclasses`, and the
// subclass -> superclass relation is a function.
class Ontology {
public:
    Ontology() = default;
    explicit Ontology(std::vector<StatementInfo> statements,
                      const std::vector<std::string>& allowed_superclasses = default_superclasses());

    std::size_t size() const { return statements_.size(); }
    const std::vector<StatementInfo>& statements() const { return statements_; }
    bool contains(std::string_view code) const;
    const StatementInfo& at(std::string_view code) const;

    // Sorted code lists.
    std::vector<std::string> all_codes() const;
    std::vector<std::string> diagnostic_codes() const;
    std::vector<std::string> form_codes() const;
    std::vector<std::string> rhythm_codes() const;
    std::vector<std::string> subclasses() const;
    std::vector<std::string> superclasses() const;

    const std::string& superclass_of_subclass(std::string_view subclass) const;

private:
    std::vector<StatementInfo> statements_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::map<std::string, std::string, std::less<>> sub_to_super_;
};

enum class TaskName { all, diag, sub_diag, super_diag, form, rhythm, quality, age, gender };

TaskName parse_task_name(std::string_view name);
std::string to_string(TaskName name);
bool is_statement_task(TaskName name);

struct TaskSpec {
    TaskName name = TaskName::all;
    std::vector<std::string> class_list;
};

// Class list for a task, taken from the ontology (sorted lexicographically).
TaskSpec make_task_spec(TaskName name, const Ontology& ontology);

struct LabelMatrix {
    std::vector<std::string> record_ids;
    std::vector<std::string> class_codes;
    Matrix values;       // N x C, entries 0 or 1
    Matrix likelihoods;  // N x C or empty; nonzero only where values == 1

    std::size_t num_records() const { return record_ids.size(); }
    std::size_t num_classes() const { return class_codes.size(); }
    bool has_likelihoods() const { return !likelihoods.empty(); }
    // Number of true labels in row i.
    std::size_t row_count(std::size_t i) const;
    LabelMatrix select_rows(std::span<const std::size_t> rows) const;
};

struct PredictionMatrix {
    std::vector<std::string> record_ids;
    std::vector<std::string> class_codes;
    Matrix scores;  // N x C, finite

    std::size_t num_records() const { return record_ids.size(); }
    std::size_t num_classes() const { return class_codes.size(); }
    PredictionMatrix select_rows(std::span<const std::size_t> rows) const;
};

// Throws DataError unless record ids and class codes agree element by element.
void require_aligned(const PredictionMatrix& preds, const LabelMatrix& labels);

// Reorders the prediction rows and columns to match the given ids and codes.
// Throws if any id or code is missing.
PredictionMatrix align_to(const PredictionMatrix& preds, std::span<const std::string> record_ids,
                          std::span<const std::string> class_codes);

struct TaskResult {
    LabelMatrix labels;
    std::vector<std::string> kept_record_ids;
    // Regression target per kept record (age task only).
    std::vector<double> targets;
};

// Label set of one record under a task (sorted, deduplicated). Throws on
// statement codes the ontology does not know.
std::vector<std::string> record_labels(const Record& record, const Ontology& ontology, TaskName task);

// Histogram of per-record label counts {0, 1, 2, 3, >=4} before filtering.
std::array<std::size_t, 5> label_count_histogram(std::span<const Record> records, const Ontology& ontology,
                                                 TaskName task);

TaskResult build_task(std::span<const Record> records, const Ontology& ontology, const TaskSpec& task);

// Single-class "artifact" target: 1 iff any noise or drift flag is present.
LabelMatrix build_quality_target(std::span<const Record> records);
double positive_fraction(const LabelMatrix& labels, std::size_t column = 0);

enum class Subpopulation { all, healthy, non_healthy };
Subpopulation parse_subpopulation(std::string_view name);

// healthy <=> the record's diagnostic statements are exactly {NORM}.
std::vector<bool> subpopulation_mask(std::span<const Record> records, const Ontology& ontology, Subpopulation which);

// Elementwise mean of aligned prediction matrices. Later inputs are re-aligned
// by record id and class code to the first one.
PredictionMatrix ensemble_average(std::span<const PredictionMatrix> preds);

std::vector<Record> filter_by_folds(std::span<const Record> records, const std::set<int>& folds);

}  // namespace ecgbench
