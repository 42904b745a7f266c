#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"
#include "ecgbench/random.hpp"

namespace ecgbench::testing {

// Temporary directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Small ontology in the scp_statements.csv layout with the same structure as
// PTB-XL: diagnostic codes under the five superclasses (two of them also
// flagged as form), pure form codes and rhythm codes.
std::string toy_ontology_csv();
Ontology toy_ontology();

Record make_record(std::string id, std::vector<Statement> statements, int fold = 1, std::string patient = "");

// Writes a format-16 waveform record (header + .dat) with the given raw ADC
// values (leads x samples).
void write_wfdb_record(const std::filesystem::path& dir, const std::string& name,
                       const std::vector<std::vector<std::int16_t>>& raw, double fs,
                       const std::vector<double>& gain, const std::vector<double>& baseline);

// Aligned prediction/label pair from nested row vectors; records are named
// r0, r1, ... and classes c0, c1, ...
struct Instance {
    PredictionMatrix preds;
    LabelMatrix labels;
};
Instance make_instance(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<double>>& labels);

// Random small multi-label instance; every record has at least one label and
// scores are drawn from a coarse lattice so ties occur.
Instance random_instance(SplitMix64& rng, std::size_t max_records, std::size_t max_classes);

// 6877 records over the nine ICBEB classes with the challenge's class
// frequencies, about 7% multi-label, one record per patient, 90% validated.
std::vector<Record> icbeb_like_records(std::uint64_t seed);

struct SyntheticDatasetOptions {
    std::size_t num_records = 400;
    std::size_t num_samples = 1000;
    std::size_t num_leads = 12;
    double fs = 100.0;
    std::uint64_t seed = 7;
    bool write_signals = true;
};

// PTB-XL shaped directory: ptbxl_database.csv, scp_statements.csv and
// records100/. Class membership changes the spectral content of the signals so
// feature-based models can learn it.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDatasetOptions& options = {});

}  // namespace ecgbench::testing
