#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

struct MetadataOptions {
    // Sampling rate whose waveform files the records point at (100 or 500).
    int sampling_rate = 100;
};

// Parses a metadata table (PTB-XL ptbxl_database.csv or the normalized layout
// documented in docs/formats.md). Rows keep file order.
std::vector<Record> parse_metadata(const std::filesystem::path& path, const MetadataOptions& options = {});
std::vector<Record> parse_metadata_text(std::string_view text, const MetadataOptions& options = {});

// Normalized metadata layout; parse_metadata_text(serialize_metadata(r)) == r.
std::string serialize_metadata(const std::vector<Record>& records);

// Parses a serialized statement map such as {'NORM': 100.0, 'SR': 0.0}.
// Single or double quoted keys, integer or real values, any whitespace.
std::vector<Statement> parse_statement_map(std::string_view literal);

Ontology parse_ontology(const std::filesystem::path& path);
Ontology parse_ontology_text(std::string_view text);

struct SignalHeader {
    std::string record_name;
    std::size_t num_leads = 0;
    std::size_t samples_per_lead = 0;  // 0 if the header omits it
    double sampling_rate = 0.0;
    std::string data_file;
    std::string format;
    std::size_t byte_offset = 0;
    std::vector<double> gain;      // ADC units per millivolt
    std::vector<double> baseline;  // ADC units
    std::vector<std::string> lead_names;
};

SignalHeader parse_signal_header(std::string_view text);

// Reads a waveform record given its .hea path (with or without suffix).
// Only interleaved 16-bit little-endian storage is supported.
Signal read_signal(const std::filesystem::path& header_path);

// Convenience: signal for a record at its configured rate, below data_dir.
Signal load_record_signal(const Record& record, const std::filesystem::path& data_dir);

// Prediction container. Paths ending in .bin use the binary layout
// ("ECGBNCH1", u64 N, u64 C, N*C little-endian float32, plus a sidecar
// "<path>.ids"); everything else is delimited text "record_id,<codes...>".
PredictionMatrix read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, const PredictionMatrix& preds);

// Label matrices reuse the prediction container; likelihoods, when present,
// go to a sibling "<stem>.likelihood<ext>".
LabelMatrix read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelMatrix& labels);
std::filesystem::path likelihood_path(const std::filesystem::path& labels_path);

struct Dataset {
    std::filesystem::path root;
    std::vector<Record> records;
    Ontology ontology;
};

// Locates ptbxl_database.csv / scp_statements.csv (or metadata.csv /
// ontology.csv) under data_dir and parses both.
Dataset load_dataset(const std::filesystem::path& data_dir, const MetadataOptions& options = {});

}  // namespace ecgbench
