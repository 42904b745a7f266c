#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

enum class SplitMode { patient, record };
SplitMode parse_split_mode(std::string_view name);

struct SplitOptions {
    std::size_t k = 10;
    SplitMode mode = SplitMode::patient;
    std::uint64_t seed = 0;
    // Folds k-1 and k take only human-validated records.
    bool clean_tail = false;
    // Keep records already in folds k-1 and k where they are and
    // re-stratify only the rest into folds 1..k-2.
    bool keep_existing_tail = false;
};

struct FoldAssignment {
    std::vector<std::string> record_ids;
    std::vector<int> folds;  // 1..k, parallel to record_ids
    std::size_t k = 0;

    std::string serialize() const;  // record_id,fold
    static FoldAssignment parse(std::string_view text);
};

// Iterative stratification over the records' statement codes. Carriers are
// patients or single records; a patient's labels are the multiset union of
// its records' labels.
FoldAssignment stratified_folds(std::span<const Record> records, const SplitOptions& options);

struct SplitRoles {
    std::vector<std::size_t> train, val, test;  // indices into the assignment
};

// train = folds 1..k-2, val = k-1, test = k.
SplitRoles split_roles(const FoldAssignment& folds);

// Label-stratified subset of the training records for transfer curves.
// `folds_worth` is in units of one fold of a (k-2)-fold training set, e.g.
// 0.125 for an eighth of a fold; the subset has round(n * folds_worth / (k-2))
// records.
std::vector<std::size_t> subsample_train(std::span<const Record> train, double folds_worth, std::uint64_t seed,
                                         std::size_t k = 10);

// Writes each record's fold into the records (matched by id).
void apply_folds(std::vector<Record>& records, const FoldAssignment& folds);

}  // namespace ecgbench
