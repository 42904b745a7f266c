#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "ecgbench/ingest.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::uint64_t counter = 0;
    const auto base = fs::temp_directory_path();
    for (;;) {
        auto candidate = base / ("ecgbench_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::string toy_ontology_csv() {
    return ",description,diagnostic,form,rhythm,diagnostic_class,diagnostic_subclass,Statement Category\n"
           "NDT,\"non-diagnostic T abnormalities\",1.0,1.0,,STTC,STTC,\"Basic roots, ST/T\"\n"
           "NST_,non-specific ST changes,1.0,1.0,,STTC,NST_,ST/T\n"
           "ISC_,non-specific ischemic,1.0,,,STTC,ISC_,ST/T\n"
           "NORM,normal ECG,1.0,,,NORM,NORM,Normal\n"
           "IMI,inferior myocardial infarction,1.0,,,MI,IMI,MI\n"
           "ASMI,anteroseptal myocardial infarction,1.0,,,MI,AMI,MI\n"
           "AMI,anterior myocardial infarction,1.0,,,MI,AMI,MI\n"
           "LVH,left ventricular hypertrophy,1.0,,,HYP,LVH,HYP\n"
           "LAFB,left anterior fascicular block,1.0,,,CD,LAFB/LPFB,CD\n"
           "IVCD,non-specific intraventricular conduction disturbance,1.0,,,CD,IVCD,CD\n"
           "CLBBB,complete left bundle branch block,1.0,,,CD,CLBBB,CD\n"
           "PVC,ventricular premature complex,,1.0,,,,Form\n"
           "LVOLT,low QRS voltages,,1.0,,,,Form\n"
           "HVOLT,high QRS voltage,,1.0,,,,Form\n"
           "SR,sinus rhythm,,,1.0,,,Rhythm\n"
           "AFIB,atrial fibrillation,,,1.0,,,Rhythm\n"
           "STACH,sinus tachycardia,,,1.0,,,Rhythm\n";
}

Ontology toy_ontology() { return parse_ontology_text(toy_ontology_csv()); }

Record make_record(std::string id, std::vector<Statement> statements, int fold, std::string patient) {
    Record r;
    r.patient_id = patient.empty() ? id : std::move(patient);
    r.record_id = std::move(id);
    r.statements = std::move(statements);
    r.fold = fold;
    return r;
}

Instance make_instance(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<double>>& labels) {
    Instance inst;
    const std::size_t n = scores.size(), c = n ? scores[0].size() : 0;
    for (std::size_t i = 0; i < n; ++i) inst.preds.record_ids.push_back("r" + std::to_string(i));
    for (std::size_t k = 0; k < c; ++k) inst.preds.class_codes.push_back("c" + std::to_string(k));
    inst.preds.scores = Matrix(n, c);
    inst.labels.record_ids = inst.preds.record_ids;
    inst.labels.class_codes = inst.preds.class_codes;
    inst.labels.values = Matrix(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            inst.preds.scores(i, k) = scores[i][k];
            inst.labels.values(i, k) = labels[i][k];
        }
    }
    return inst;
}

Instance random_instance(SplitMix64& rng, std::size_t max_records, std::size_t max_classes) {
    const std::size_t n = 2 + rng.below(max_records - 1);
    const std::size_t c = 1 + rng.below(max_classes);
    std::vector<std::vector<double>> s(n, std::vector<double>(c)), l(n, std::vector<double>(c));
    const bool coarse = rng.uniform() < 0.5;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            s[i][k] = coarse ? static_cast<double>(rng.below(11)) / 10.0 : rng.uniform();
            l[i][k] = rng.uniform() < 0.35 ? 1.0 : 0.0;
        }
        l[i][rng.below(c)] = 1.0;
    }
    return make_instance(s, l);
}

std::vector<Record> icbeb_like_records(std::uint64_t seed) {
    static const std::vector<std::pair<std::string, double>> classes{
        {"NORM", 918}, {"AFIB", 1098}, {"1AVB", 704}, {"CLBBB", 207}, {"CRBBB", 1695},
        {"PAC", 556},  {"PVC", 672},   {"STD_", 825}, {"STE_", 202}};
    double total = 0;
    for (const auto& c : classes) total += c.second;
    SplitMix64 rng(seed);
    const auto draw = [&] {
        double u = rng.uniform() * total;
        for (const auto& [code, w] : classes) {
            if ((u -= w) < 0) return code;
        }
        return classes.back().first;
    };
    std::vector<Record> out;
    for (std::size_t i = 0; i < 6877; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "A%04zu", i + 1);
        std::vector<Statement> st{{draw(), 100.0}};
        if (rng.uniform() < 0.07) {
            auto extra = draw();
            if (extra != st[0].code) st.push_back({extra, 100.0});
        }
        auto r = make_record(id, st, 0);
        r.validated_by_human = rng.uniform() < 0.9;
        out.push_back(std::move(r));
    }
    return out;
}

void write_wfdb_record(const fs::path& dir, const std::string& name, const std::vector<std::vector<std::int16_t>>& raw,
                       double fs, const std::vector<double>& gain, const std::vector<double>& baseline) {
    fs::create_directories(dir);
    const std::size_t leads = raw.size();
    const std::size_t n = leads ? raw[0].size() : 0;
    std::ostringstream hea;
    hea << name << ' ' << leads << ' ' << fs << ' ' << n << '\n';
    static const char* lead_names[] = {"I", "II", "III", "AVR", "AVL", "AVF", "V1", "V2", "V3", "V4", "V5", "V6"};
    for (std::size_t l = 0; l < leads; ++l) {
        hea << name << ".dat 16 " << gain[l] << '(' << baseline[l] << ")/mV 16 0 0 0 0 "
            << (l < 12 ? lead_names[l] : ("X" + std::to_string(l)).c_str()) << '\n';
    }
    std::ofstream(dir / (name + ".hea")) << hea.str();
    std::string bytes;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t l = 0; l < leads; ++l) {
            const auto u = static_cast<std::uint16_t>(raw[l][t]);
            bytes.push_back(static_cast<char>(u & 0xFF));
            bytes.push_back(static_cast<char>(u >> 8));
        }
    }
    std::ofstream(dir / (name + ".dat"), std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_synthetic_dataset(const fs::path& dir, const SyntheticDatasetOptions& options) {
    fs::create_directories(dir);
    write_file_atomic(dir / "scp_statements.csv", toy_ontology_csv());

    SplitMix64 rng(options.seed);
    static const std::vector<std::string> abnormal{"IMI", "ASMI", "AMI", "LVH", "LAFB", "IVCD", "CLBBB", "NST_", "NDT", "ISC_"};
    static const double likelihoods[] = {0, 15, 35, 50, 80, 100};

    std::ostringstream meta;
    meta << "ecg_id,patient_id,age,sex,validated_by_human,scp_codes,baseline_drift,static_noise,burst_noise,"
            "electrodes_problems,strat_fold,filename_lr,filename_hr\n";
    std::size_t patient = 1000;
    for (std::size_t i = 0; i < options.num_records; ++i) {
        // about one in five patients contributes a second record
        if (i == 0 || rng.uniform() > 0.2) ++patient;
        std::vector<std::string> codes;
        if (rng.uniform() < 0.4) {
            codes.push_back("NORM");
            if (rng.uniform() < 0.08) codes.push_back("IVCD");
        } else {
            codes.push_back(abnormal[rng.below(abnormal.size())]);
            if (rng.uniform() < 0.3) {
                auto extra = abnormal[rng.below(abnormal.size())];
                if (std::find(codes.begin(), codes.end(), extra) == codes.end()) codes.push_back(extra);
            }
        }
        const bool afib = rng.uniform() < 0.12;
        codes.push_back(afib ? "AFIB" : (rng.uniform() < 0.1 ? "STACH" : "SR"));
        if (rng.uniform() < 0.1) codes.push_back("PVC");
        if (rng.uniform() < 0.05) codes.push_back("LVOLT");

        std::string map = "{";
        for (std::size_t k = 0; k < codes.size(); ++k) {
            const double lk = codes[k] == "SR" || codes[k] == "AFIB" || codes[k] == "STACH" ? 0.0
                                                                                              : likelihoods[1 + rng.below(5)];
            map += (k ? ", '" : "'") + codes[k] + "': " + format_double(lk) + ".0";
        }
        map += "}";
        const auto flag = [&](double p) { return rng.uniform() < p ? std::string(", I-AVR,") : std::string(); };
        const std::string record = std::to_string(i + 1);
        char name[32];
        std::snprintf(name, sizeof name, "%05zu_lr", i + 1);
        const std::string rel = "records100/00000/" + std::string(name);
        meta << record << ',' << patient << ".0," << (20 + rng.below(70)) << ',' << rng.below(2) << ','
             << (rng.uniform() < 0.75 ? "True" : "False") << ",\"" << map << "\"," << csv_escape(flag(0.08)) << ','
             << csv_escape(flag(0.12)) << ',' << csv_escape(flag(0.04)) << ',' << csv_escape(flag(0.02)) << ','
             << (patient % 10 + 1) << ',' << rel << ",records500/00000/" << (i + 1) << "_hr\n";

        if (!options.write_signals) continue;
        const auto has = [&](std::initializer_list<const char*> cs) {
            for (auto c : cs) {
                if (std::find(codes.begin(), codes.end(), c) != codes.end()) return true;
            }
            return false;
        };
        std::vector<std::vector<std::int16_t>> raw(options.num_leads, std::vector<std::int16_t>(options.num_samples));
        const double hr = (has({"STACH"}) ? 2.0 : 1.1) + 0.2 * rng.uniform();
        const double phase = rng.uniform() * 2 * std::numbers::pi;
        for (std::size_t l = 0; l < options.num_leads; ++l) {
            const double lead_gain = 0.6 + 0.1 * static_cast<double>(l % 5);
            for (std::size_t t = 0; t < options.num_samples; ++t) {
                const double s = static_cast<double>(t) / options.fs;
                const double beat = std::sin(2 * std::numbers::pi * hr * s + phase);
                double v = lead_gain * std::pow(std::max(0.0, beat), 8.0);
                if (has({"IMI", "ASMI", "AMI"}) && (l == 1 || l == 2 || l == 5 || l >= 6)) {
                    v += 0.25 * std::sin(2 * std::numbers::pi * 7.5 * s);
                }
                if (has({"LVH"}) && l >= 9) v *= 2.5;
                if (has({"LAFB", "IVCD", "CLBBB"})) v += 0.15 * std::sin(2 * std::numbers::pi * 21.0 * s + l);
                if (has({"NST_", "NDT", "ISC_"})) v += 0.3 * std::sin(2 * std::numbers::pi * 0.35 * s);
                if (has({"AFIB"})) v += 0.12 * (rng.uniform() - 0.5) * 4;
                if (has({"PVC"}) && t % 400 == 200) v += 1.5;
                if (has({"LVOLT"})) v *= 0.4;
                v += 0.03 * (rng.uniform() - 0.5);
                raw[l][t] = static_cast<std::int16_t>(std::lround(std::clamp(v * 1000.0, -32000.0, 32000.0)));
            }
        }
        write_wfdb_record(dir / "records100/00000", name, raw, options.fs, std::vector<double>(options.num_leads, 1000.0),
                          std::vector<double>(options.num_leads, 0.0));
    }
    write_file_atomic(dir / "ptbxl_database.csv", meta.str());
}

}  // namespace ecgbench::testing
