#include "ecgbench/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ecgbench/error.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// statement maps

std::vector<Statement> parse_statement_map(std::string_view literal) {
    std::vector<Statement> out;
    std::size_t pos = 0;
    const auto fail = [&](const std::string& why) -> std::vector<Statement> {
        throw DataError("unparseable statement map (" + why + "): " + std::string(literal));
    };
    const auto skip_ws = [&] {
        while (pos < literal.size() && std::isspace(static_cast<unsigned char>(literal[pos]))) ++pos;
    };

    skip_ws();
    if (pos >= literal.size() || literal[pos] != '{') return fail("expected '{'");
    ++pos;
    skip_ws();
    if (pos < literal.size() && literal[pos] == '}') {
        ++pos;
        skip_ws();
        if (pos != literal.size()) return fail("trailing characters");
        return out;
    }
    for (;;) {
        skip_ws();
        if (pos >= literal.size()) return fail("unexpected end");
        const char quote = literal[pos];
        if (quote != '\'' && quote != '"') return fail("expected quoted key");
        const auto close = literal.find(quote, pos + 1);
        if (close == std::string_view::npos) return fail("unterminated key");
        std::string code(literal.substr(pos + 1, close - pos - 1));
        pos = close + 1;
        skip_ws();
        if (pos >= literal.size() || literal[pos] != ':') return fail("expected ':'");
        ++pos;
        skip_ws();
        const auto value_end = literal.find_first_of(",}", pos);
        if (value_end == std::string_view::npos) return fail("unterminated value");
        const auto value = parse_double(literal.substr(pos, value_end - pos));
        if (!value) return fail("bad likelihood for " + code);
        if (!(*value >= 0.0 && *value <= 100.0)) return fail("likelihood out of [0,100] for " + code);
        for (const auto& s : out) {
            if (s.code == code) return fail("duplicate code " + code);
        }
        out.push_back({std::move(code), *value});
        pos = value_end;
        if (literal[pos] == '}') {
            ++pos;
            skip_ws();
            if (pos != literal.size()) return fail("trailing characters");
            return out;
        }
        ++pos;  // ','
        skip_ws();
        // tolerate a trailing comma before '}'
        if (pos < literal.size() && literal[pos] == '}') {
            ++pos;
            skip_ws();
            if (pos != literal.size()) return fail("trailing characters");
            return out;
        }
    }
}

// ---------------------------------------------------------------------------
// metadata

namespace {

bool parse_bool_field(std::string_view s, std::size_t row, std::string_view column) {
    s = trim(s);
    if (s.empty() || s == "False" || s == "false" || s == "0" || s == "0.0") return false;
    if (s == "True" || s == "true" || s == "1" || s == "1.0") return true;
    throw DataError("row " + std::to_string(row) + ": bad boolean in " + std::string(column) + ": " + std::string(s));
}

Sex parse_sex(std::string_view s) {
    s = trim(s);
    if (auto v = parse_double(s)) {
        if (*v == 0.0) return Sex::male;
        if (*v == 1.0) return Sex::female;
        return Sex::unknown;
    }
    if (s == "male" || s == "M" || s == "m") return Sex::male;
    if (s == "female" || s == "F" || s == "f") return Sex::female;
    return Sex::unknown;
}

// "15709.0" -> "15709"; other ids are kept verbatim.
std::string normalize_id(std::string_view s) {
    s = trim(s);
    if (auto v = parse_double(s); v && std::floor(*v) == *v && std::fabs(*v) < 1e15) {
        return std::to_string(static_cast<long long>(*v));
    }
    return std::string(s);
}

bool nonempty_annotation(std::string_view s) {
    s = trim(s);
    return !s.empty() && s != "nan" && s != "NaN";
}

}  // namespace

std::vector<Record> parse_metadata_text(std::string_view text, const MetadataOptions& options) {
    const CsvTable table = parse_csv(text);
    if (table.header.empty()) throw DataError("metadata is empty");

    const auto require = [&](std::initializer_list<std::string_view> names) {
        auto idx = table.find_any(names);
        if (!idx) throw DataError("metadata lacks required column " + std::string(*names.begin()));
        return *idx;
    };
    const std::size_t c_id = require({"ecg_id", "record_id"});
    const std::size_t c_patient = require({"patient_id"});
    const std::size_t c_fold = require({"strat_fold", "fold"});
    const std::size_t c_statements = require({"scp_codes", "statements"});
    const auto c_age = table.find("age");
    const auto c_sex = table.find("sex");
    const auto c_validated = table.find("validated_by_human");
    const auto c_rate = table.find("sampling_rate");
    const auto c_static = table.find("static_noise");
    const auto c_burst = table.find("burst_noise");
    const auto c_drift = table.find("baseline_drift");
    const auto c_electrode = table.find_any({"electrodes_problems", "electrode_problems"});
    const auto c_file_lr = table.find("filename_lr");
    const auto c_file_hr = table.find("filename_hr");
    const auto c_file = table.find("filename");

    std::vector<Record> records;
    records.reserve(table.rows.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t row_no = r + 1;
        Record rec;
        rec.record_id = normalize_id(row[c_id]);
        if (rec.record_id.empty()) throw DataError("row " + std::to_string(row_no) + ": empty record id");
        if (!seen.insert(rec.record_id).second) {
            throw DataError("row " + std::to_string(row_no) + ": duplicate record id " + rec.record_id);
        }
        rec.patient_id = normalize_id(row[c_patient]);
        if (rec.patient_id.empty()) rec.patient_id = rec.record_id;

        const auto fold_text = trim(row[c_fold]);
        if (!fold_text.empty()) {
            const auto fold = parse_double(fold_text);
            if (!fold || *fold < 1 || std::floor(*fold) != *fold) {
                throw DataError("row " + std::to_string(row_no) + ": bad fold " + std::string(fold_text));
            }
            rec.fold = static_cast<int>(*fold);
        }

        try {
            rec.statements = parse_statement_map(row[c_statements]);
        } catch (const DataError& e) {
            throw DataError("row " + std::to_string(row_no) + ": " + e.what());
        }

        if (c_age && !trim(row[*c_age]).empty()) {
            rec.age = parse_double(row[*c_age]);
            if (!rec.age) throw DataError("row " + std::to_string(row_no) + ": bad age " + row[*c_age]);
        }
        if (c_sex) rec.sex = parse_sex(row[*c_sex]);
        if (c_validated) rec.validated_by_human = parse_bool_field(row[*c_validated], row_no, "validated_by_human");
        if (c_static && nonempty_annotation(row[*c_static])) rec.quality.set(QualityFlag::static_noise);
        if (c_burst && nonempty_annotation(row[*c_burst])) rec.quality.set(QualityFlag::burst_noise);
        if (c_drift && nonempty_annotation(row[*c_drift])) rec.quality.set(QualityFlag::baseline_drift);
        if (c_electrode && nonempty_annotation(row[*c_electrode])) rec.quality.set(QualityFlag::electrode_problem);

        rec.sampling_rate = options.sampling_rate;
        if (c_rate && !trim(row[*c_rate]).empty()) {
            const auto rate = parse_double(row[*c_rate]);
            if (!rate || *rate <= 0) throw DataError("row " + std::to_string(row_no) + ": bad sampling rate");
            rec.sampling_rate = static_cast<int>(*rate);
        }
        if (c_file_lr && !trim(row[*c_file_lr]).empty()) rec.signal_files[100] = std::string(trim(row[*c_file_lr]));
        if (c_file_hr && !trim(row[*c_file_hr]).empty()) rec.signal_files[500] = std::string(trim(row[*c_file_hr]));
        if (c_file && !trim(row[*c_file]).empty()) rec.signal_files[rec.sampling_rate] = std::string(trim(row[*c_file]));
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<Record> parse_metadata(const fs::path& path, const MetadataOptions& options) {
    try {
        return parse_metadata_text(read_file(path), options);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string serialize_metadata(const std::vector<Record>& records) {
    std::ostringstream out;
    out << "record_id,patient_id,age,sex,fold,validated_by_human,sampling_rate,statements,"
           "static_noise,burst_noise,baseline_drift,electrodes_problems,filename_lr,filename_hr\n";
    for (const auto& r : records) {
        std::string map = "{";
        for (std::size_t i = 0; i < r.statements.size(); ++i) {
            if (i) map += ", ";
            map += "'" + r.statements[i].code + "': " + format_double(r.statements[i].likelihood);
        }
        map += "}";
        const auto flag = [&](QualityFlag f) { return r.quality.has(f) ? "1" : ""; };
        const auto file = [&](int rate) {
            auto it = r.signal_files.find(rate);
            return it == r.signal_files.end() ? std::string{} : csv_escape(it->second);
        };
        out << csv_escape(r.record_id) << ',' << csv_escape(r.patient_id) << ','
            << (r.age ? format_double(*r.age) : "") << ','
            << (r.sex == Sex::male ? "0" : r.sex == Sex::female ? "1" : "") << ','
            << (r.fold > 0 ? std::to_string(r.fold) : "") << ',' << (r.validated_by_human ? "True" : "False") << ','
            << r.sampling_rate << ',' << csv_escape(map) << ',' << flag(QualityFlag::static_noise) << ','
            << flag(QualityFlag::burst_noise) << ',' << flag(QualityFlag::baseline_drift) << ','
            << flag(QualityFlag::electrode_problem) << ',' << file(100) << ',' << file(500) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// ontology

namespace {

bool flag_set(std::string_view s) {
    s = trim(s);
    if (s.empty()) return false;
    if (auto v = parse_double(s)) return *v != 0.0;
    return s == "True" || s == "true";
}

std::optional<std::string> optional_code(std::string_view s) {
    s = trim(s);
    if (s.empty() || s == "nan") return std::nullopt;
    return std::string(s);
}

}  // namespace

Ontology parse_ontology_text(std::string_view text) {
    const CsvTable table = parse_csv(text);
    if (table.header.empty() || table.rows.empty()) throw DataError("ontology file is empty");
    // PTB-XL's scp_statements.csv keys rows by an unnamed first column.
    std::size_t c_code = 0;
    if (auto idx = table.find_any({"code", "statement", "scp_code"})) c_code = *idx;
    const auto c_diag = table.find("diagnostic");
    const auto c_form = table.find("form");
    const auto c_rhythm = table.find("rhythm");
    const auto c_super = table.find_any({"diagnostic_class", "diagnostic_superclass"});
    const auto c_sub = table.find("diagnostic_subclass");
    const auto c_desc = table.find("description");
    if (!c_diag || !c_form || !c_rhythm) throw DataError("ontology lacks diagnostic/form/rhythm flag columns");

    std::vector<StatementInfo> statements;
    for (const auto& row : table.rows) {
        StatementInfo s;
        s.code = std::string(trim(row[c_code]));
        if (c_desc) s.description = row[*c_desc];
        s.is_diagnostic = flag_set(row[*c_diag]);
        s.is_form = flag_set(row[*c_form]);
        s.is_rhythm = flag_set(row[*c_rhythm]);
        if (c_super) s.diagnostic_superclass = optional_code(row[*c_super]);
        if (c_sub) s.diagnostic_subclass = optional_code(row[*c_sub]);
        statements.push_back(std::move(s));
    }
    return Ontology(std::move(statements));
}

Ontology parse_ontology(const fs::path& path) {
    try {
        return parse_ontology_text(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// waveform records

SignalHeader parse_signal_header(std::string_view text) {
    std::vector<std::string> lines;
    for (auto& line : split(text, '\n')) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        lines.emplace_back(t);
    }
    if (lines.empty()) throw DataError("empty waveform header");

    const auto tokens = [](const std::string& line) {
        std::vector<std::string> out;
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) out.push_back(tok);
        return out;
    };

    SignalHeader h;
    const auto head = tokens(lines[0]);
    if (head.size() < 2) throw DataError("waveform header record line too short: " + lines[0]);
    h.record_name = head[0];
    if (h.record_name.find('/') != std::string::npos) throw DataError("multi-segment records are not supported");
    const auto nsig = parse_int(head[1]);
    if (!nsig || *nsig < 1) throw DataError("bad signal count in waveform header: " + head[1]);
    h.num_leads = static_cast<std::size_t>(*nsig);
    h.sampling_rate = 250.0;  // format default
    if (head.size() > 2) {
        std::string fs_text = head[2].substr(0, head[2].find_first_of("/("));
        const auto fs = parse_double(fs_text);
        if (!fs || *fs <= 0) throw DataError("bad sampling frequency in waveform header: " + head[2]);
        h.sampling_rate = *fs;
    }
    if (head.size() > 3) {
        const auto ns = parse_int(head[3]);
        if (!ns || *ns < 0) throw DataError("bad sample count in waveform header: " + head[3]);
        h.samples_per_lead = static_cast<std::size_t>(*ns);
    }

    if (lines.size() < 1 + h.num_leads) throw DataError("waveform header lists fewer signal lines than declared");
    for (std::size_t s = 0; s < h.num_leads; ++s) {
        const auto tok = tokens(lines[1 + s]);
        if (tok.size() < 2) throw DataError("waveform signal line too short: " + lines[1 + s]);
        if (s == 0) {
            h.data_file = tok[0];
        } else if (tok[0] != h.data_file) {
            throw DataError("signals stored in separate files are not supported");
        }
        // format[xsamp][:skew][+offset]
        std::string fmt = tok[1];
        if (auto plus = fmt.find('+'); plus != std::string::npos) {
            const auto off = parse_int(fmt.substr(plus + 1));
            if (!off || *off < 0) throw DataError("bad byte offset: " + tok[1]);
            h.byte_offset = static_cast<std::size_t>(*off);
            fmt = fmt.substr(0, plus);
        }
        fmt = fmt.substr(0, fmt.find_first_of("x:"));
        if (s == 0) h.format = fmt;
        if (fmt != "16") throw DataError("unsupported waveform storage format " + fmt + " (only format 16 is supported)");

        double gain = 200.0;  // format default when the field is absent
        double baseline = 0.0;
        bool baseline_given = false;
        if (tok.size() > 2) {
            std::string g = tok[2];
            if (auto slash = g.find('/'); slash != std::string::npos) g = g.substr(0, slash);
            if (auto paren = g.find('('); paren != std::string::npos) {
                const auto close = g.find(')', paren);
                if (close == std::string::npos) throw DataError("bad gain field: " + tok[2]);
                const auto b = parse_double(g.substr(paren + 1, close - paren - 1));
                if (!b) throw DataError("bad baseline in gain field: " + tok[2]);
                baseline = *b;
                baseline_given = true;
                g = g.substr(0, paren);
            }
            const auto gv = parse_double(g);
            if (!gv) throw DataError("bad gain field: " + tok[2]);
            gain = *gv;
        }
        if (gain == 0.0) throw DataError("gain of signal " + std::to_string(s) + " is zero");
        if (!baseline_given && tok.size() > 4) {
            // baseline defaults to the ADC zero
            if (auto z = parse_double(tok[4])) baseline = *z;
        }
        h.gain.push_back(gain);
        h.baseline.push_back(baseline);
        h.lead_names.push_back(tok.size() > 8 ? tok[8] : "sig" + std::to_string(s));
    }
    return h;
}

Signal read_signal(const fs::path& header_path) {
    fs::path hea = header_path;
    if (hea.extension() != ".hea") hea += ".hea";
    const SignalHeader h = parse_signal_header(read_file(hea));
    const fs::path dat = hea.parent_path() / h.data_file;
    const auto bytes = read_bytes(dat);
    if (bytes.size() < h.byte_offset) throw DataError(dat.string() + ": shorter than its byte offset");
    const std::size_t payload = bytes.size() - h.byte_offset;
    const std::size_t frame = 2 * h.num_leads;
    std::size_t n = h.samples_per_lead;
    if (n == 0) {
        if (payload % frame != 0) throw DataError(dat.string() + ": size is not a whole number of frames");
        n = payload / frame;
    }
    if (payload != n * frame) {
        throw DataError(dat.string() + ": payload is " + std::to_string(payload) + " bytes, header implies " +
                        std::to_string(n * frame));
    }
    Signal sig;
    sig.sampling_rate = h.sampling_rate;
    sig.lead_names = h.lead_names;
    sig.samples = Matrix(h.num_leads, n);
    const std::uint8_t* p = bytes.data() + h.byte_offset;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t l = 0; l < h.num_leads; ++l) {
            const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
            p += 2;
            sig.samples(l, t) = (static_cast<double>(raw) - h.baseline[l]) / h.gain[l];
        }
    }
    return sig;
}

Signal load_record_signal(const Record& record, const fs::path& data_dir) {
    auto it = record.signal_files.find(record.sampling_rate);
    if (it == record.signal_files.end()) {
        throw DataError("record " + record.record_id + " has no waveform file at " +
                        std::to_string(record.sampling_rate) + " Hz");
    }
    return read_signal(data_dir / it->second);
}

// ---------------------------------------------------------------------------
// prediction and label containers

namespace {

constexpr std::string_view kPredMagic = "ECGBNCH1";

bool is_binary_path(const fs::path& p) { return p.extension() == ".bin"; }

fs::path sidecar_path(const fs::path& p) {
    fs::path s = p;
    s += ".ids";
    return s;
}

void check_nonempty(const PredictionMatrix& m) {
    if (m.num_records() == 0 || m.num_classes() == 0) throw DataError("empty matrix");
    if (m.scores.rows() != m.num_records() || m.scores.cols() != m.num_classes()) {
        throw DataError("matrix shape does not match its record ids / class codes");
    }
}

PredictionMatrix read_text_matrix(const fs::path& path) {
    const CsvTable table = read_csv(path);
    if (table.header.empty() || table.rows.empty()) throw DataError(path.string() + ": empty matrix");
    PredictionMatrix m;
    m.class_codes.assign(table.header.begin() + 1, table.header.end());
    if (m.class_codes.empty()) throw DataError(path.string() + ": empty matrix");
    m.scores = Matrix(table.rows.size(), m.class_codes.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        m.record_ids.push_back(table.rows[r][0]);
        for (std::size_t c = 0; c < m.class_codes.size(); ++c) {
            const auto v = parse_double(table.rows[r][c + 1]);
            if (!v) throw DataError(path.string() + ": bad number in row " + std::to_string(r + 1));
            if (!std::isfinite(*v)) throw DataError(path.string() + ": non-finite score in row " + std::to_string(r + 1));
            m.scores(r, c) = *v;
        }
    }
    return m;
}

PredictionMatrix read_binary_matrix(const fs::path& path) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 24 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 8) != kPredMagic) {
        throw DataError(path.string() + ": magic mismatch (expected ECGBNCH1)");
    }
    const std::uint64_t n = get_u64(bytes.data() + 8);
    const std::uint64_t c = get_u64(bytes.data() + 16);
    if (n == 0 || c == 0) throw DataError(path.string() + ": empty matrix");
    if (n > (std::numeric_limits<std::uint64_t>::max() / 4) / c || bytes.size() != 24 + 4 * n * c) {
        throw DataError(path.string() + ": dimensions do not match file size");
    }
    PredictionMatrix m;
    m.scores = Matrix(n, c);
    const std::uint8_t* p = bytes.data() + 24;
    for (std::size_t i = 0; i < n * c; ++i, p += 4) {
        const float v = get_f32(p);
        if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite score at index " + std::to_string(i));
        m.scores.data()[i] = v;
    }
    const auto ids = split(read_file(sidecar_path(path)), '\n');
    if (ids.empty()) throw DataError(sidecar_path(path).string() + ": empty sidecar");
    for (auto& code : split(trim(ids[0]), ',')) m.class_codes.push_back(code);
    for (std::size_t i = 1; i < ids.size(); ++i) {
        const auto t = trim(ids[i]);
        if (!t.empty()) m.record_ids.emplace_back(t);
    }
    if (m.class_codes.size() != c || m.record_ids.size() != n) {
        throw DataError(sidecar_path(path).string() + ": id/class counts do not match the matrix dimensions");
    }
    return m;
}

}  // namespace

PredictionMatrix read_predictions(const fs::path& path) {
    return is_binary_path(path) ? read_binary_matrix(path) : read_text_matrix(path);
}

void write_predictions(const fs::path& path, const PredictionMatrix& preds) {
    check_nonempty(preds);
    for (double v : preds.scores.data()) {
        if (!std::isfinite(v)) throw DataError("refusing to write a non-finite score");
    }
    if (is_binary_path(path)) {
        std::string out(kPredMagic);
        put_u64(out, preds.num_records());
        put_u64(out, preds.num_classes());
        for (double v : preds.scores.data()) put_f32(out, static_cast<float>(v));
        std::string ids;
        for (std::size_t c = 0; c < preds.class_codes.size(); ++c) ids += (c ? "," : "") + preds.class_codes[c];
        ids += '\n';
        for (const auto& id : preds.record_ids) ids += id + '\n';
        write_file_atomic(sidecar_path(path), ids);
        write_file_atomic(path, out);
        return;
    }
    std::string out = "record_id";
    for (const auto& c : preds.class_codes) out += "," + csv_escape(c);
    out += '\n';
    for (std::size_t r = 0; r < preds.num_records(); ++r) {
        out += csv_escape(preds.record_ids[r]);
        for (double v : preds.scores.row(r)) out += "," + format_double(v);
        out += '\n';
    }
    write_file_atomic(path, out);
}

fs::path likelihood_path(const fs::path& labels_path) {
    fs::path p = labels_path.parent_path() / labels_path.stem();
    p += ".likelihood";
    p += labels_path.extension();
    return p;
}

LabelMatrix read_labels(const fs::path& path) {
    PredictionMatrix m = read_predictions(path);
    for (double v : m.scores.data()) {
        if (v != 0.0 && v != 1.0) throw DataError(path.string() + ": label values must be 0 or 1");
    }
    LabelMatrix labels{std::move(m.record_ids), std::move(m.class_codes), std::move(m.scores), {}};
    const auto lp = likelihood_path(path);
    if (fs::exists(lp)) {
        const PredictionMatrix lk = align_to(read_predictions(lp), labels.record_ids, labels.class_codes);
        labels.likelihoods = lk.scores;
    }
    return labels;
}

void write_labels(const fs::path& path, const LabelMatrix& labels) {
    write_predictions(path, PredictionMatrix{labels.record_ids, labels.class_codes, labels.values});
    if (labels.has_likelihoods()) {
        write_predictions(likelihood_path(path), PredictionMatrix{labels.record_ids, labels.class_codes, labels.likelihoods});
    }
}

Dataset load_dataset(const fs::path& data_dir, const MetadataOptions& options) {
    const auto pick = [&](std::initializer_list<const char*> names) {
        for (const char* n : names) {
            if (fs::exists(data_dir / n)) return data_dir / n;
        }
        throw DataError("no " + std::string(*names.begin()) + " found in " + data_dir.string());
    };
    Dataset ds;
    ds.root = data_dir;
    ds.ontology = parse_ontology(pick({"scp_statements.csv", "ontology.csv"}));
    ds.records = parse_metadata(pick({"ptbxl_database.csv", "metadata.csv"}), options);
    return ds;
}

}  // namespace ecgbench
