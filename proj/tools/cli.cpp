#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ecgbench/analysis.hpp"
#include "ecgbench/baseline.hpp"
#include "ecgbench/bootstrap.hpp"
#include "ecgbench/error.hpp"
#include "ecgbench/hierarchy.hpp"
#include "ecgbench/ingest.hpp"
#include "ecgbench/metrics.hpp"
#include "ecgbench/parallel.hpp"
#include "ecgbench/splits.hpp"
#include "ecgbench/text_io.hpp"
#include "manifest.hpp"
#include "version.hpp"

namespace ecgbench::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
    Context(std::ostream& o, std::ostream& e) : out(o), err(e) {}
    std::ostream& out;
    std::ostream& err;
    unsigned threads = 1;
    std::uint64_t seed = 0;
    std::string data_dir;
    std::string manifest_path;
    fs::path primary_output;
    Manifest manifest;
};

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// "1-8", "9", "1,3,5-6"
std::set<int> parse_folds(const std::string& spec) {
    std::set<int> out;
    for (const auto& part : split(spec, ',')) {
        const auto p = std::string(trim(part));
        const auto dash = p.find('-', 1);
        const auto a = parse_int(p.substr(0, dash));
        const auto b = dash == std::string::npos ? a : parse_int(p.substr(dash + 1));
        if (!a || !b || *a < 1 || *b < *a) throw ArgumentError("invalid fold list: " + spec);
        for (auto f = *a; f <= *b; ++f) out.insert(static_cast<int>(f));
    }
    if (out.empty()) throw ArgumentError("empty fold list");
    return out;
}

// "1/8" or "0.125"
double parse_fraction(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) {
        const auto v = parse_double(s);
        if (!v) throw ArgumentError("invalid fraction: " + s);
        return *v;
    }
    const auto a = parse_double(s.substr(0, slash)), b = parse_double(s.substr(slash + 1));
    if (!a || !b || *b == 0.0) throw ArgumentError("invalid fraction: " + s);
    return *a / *b;
}

Dataset load_data(Context& ctx, int sampling_rate = 100) {
    if (ctx.data_dir.empty()) throw ArgumentError("no data directory; pass --data or set ECGBENCH_DATA");
    const fs::path dir(ctx.data_dir);
    for (const char* name : {"ptbxl_database.csv", "metadata.csv", "scp_statements.csv", "ontology.csv"}) {
        if (fs::exists(dir / name)) ctx.manifest.add_input(dir / name);
    }
    MetadataOptions opts;
    opts.sampling_rate = sampling_rate;
    return load_dataset(dir, opts);
}

PredictionMatrix load_preds(Context& ctx, const fs::path& p) {
    ctx.manifest.add_input(p);
    return read_predictions(p);
}

LabelMatrix load_labels(Context& ctx, const fs::path& p) {
    ctx.manifest.add_input(p);
    if (fs::exists(likelihood_path(p))) ctx.manifest.add_input(likelihood_path(p));
    return read_labels(p);
}

void wrote(Context& ctx, const fs::path& p, bool primary = false) {
    ctx.manifest.add_output(p);
    if (primary || ctx.primary_output.empty()) ctx.primary_output = p;
}

void write_text(Context& ctx, const fs::path& p, const std::string& text, bool primary = false) {
    write_file_atomic(p, text);
    wrote(ctx, p, primary);
}

std::vector<Record> select_folds(std::span<const Record> records, const std::string& spec) {
    if (spec.empty()) return {records.begin(), records.end()};
    return filter_by_folds(records, parse_folds(spec));
}

void apply_fold_file(Context& ctx, std::vector<Record>& records, const std::string& path) {
    if (path.empty()) return;
    ctx.manifest.add_input(path);
    apply_folds(records, FoldAssignment::parse(read_file(path)));
}

// ---- ingest validate

void cmd_ingest_validate(Context& ctx, int rate, const std::string& out_path) {
    const auto ds = load_data(ctx, rate);
    std::set<std::string> patients;
    std::map<int, std::size_t> folds;
    std::size_t validated = 0;
    for (const auto& r : ds.records) {
        patients.insert(r.patient_id);
        ++folds[r.fold];
        validated += r.validated_by_human;
    }
    std::ostringstream s;
    s << ds.records.size() << " records / " << patients.size() << " patients / " << ds.ontology.size()
      << " statements\n";
    s << "diagnostic " << ds.ontology.diagnostic_codes().size() << ", form " << ds.ontology.form_codes().size()
      << ", rhythm " << ds.ontology.rhythm_codes().size() << ", subclasses " << ds.ontology.subclasses().size()
      << ", superclasses " << ds.ontology.superclasses().size() << "\n";
    s << "human-validated records " << validated << "\n";
    s << "fold sizes";
    for (const auto& [f, n] : folds) s << " " << f << ":" << n;
    s << "\n\nstatements per record\ntask\t0\t1\t2\t3\t>=4\n";
    nlohmann::json table = nlohmann::json::object();
    for (auto task : {TaskName::diag, TaskName::sub_diag, TaskName::super_diag, TaskName::form, TaskName::rhythm,
                      TaskName::all}) {
        const auto h = label_count_histogram(ds.records, ds.ontology, task);
        s << to_string(task);
        for (auto v : h) s << "\t" << v;
        s << "\n";
        table[to_string(task)] = h;
    }
    ctx.out << s.str();
    ctx.manifest.results = {{"records", ds.records.size()},
                            {"patients", patients.size()},
                            {"statements", ds.ontology.size()},
                            {"label_counts", table}};
    if (!out_path.empty()) write_text(ctx, out_path, s.str(), true);
}

// ---- task build

struct TaskArgs {
    std::string task = "all", folds, fold_file, subpop = "all", out, kept_out;
    int rate = 100;
};

void cmd_task_build(Context& ctx, const TaskArgs& a) {
    auto ds = load_data(ctx, a.rate);
    apply_fold_file(ctx, ds.records, a.fold_file);
    auto records = select_folds(ds.records, a.folds);
    const auto which = parse_subpopulation(a.subpop);
    if (which != Subpopulation::all) {
        const auto mask = subpopulation_mask(records, ds.ontology, which);
        std::vector<Record> kept;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (mask[i]) kept.push_back(records[i]);
        }
        records = std::move(kept);
    }
    const auto name = parse_task_name(a.task);
    const auto result = build_task(records, ds.ontology, make_task_spec(name, ds.ontology));
    if (name == TaskName::age) {
        PredictionMatrix t{result.labels.record_ids, {"age"}, Matrix(result.targets.size(), 1)};
        for (std::size_t i = 0; i < result.targets.size(); ++i) t.scores(i, 0) = result.targets[i];
        write_predictions(a.out, t);
    } else {
        write_labels(a.out, result.labels);
        if (result.labels.has_likelihoods()) wrote(ctx, likelihood_path(a.out));
    }
    wrote(ctx, a.out, true);
    const fs::path kept = a.kept_out.empty() ? fs::path(a.out + ".kept.txt") : fs::path(a.kept_out);
    std::string ids;
    for (const auto& id : result.kept_record_ids) ids += id + "\n";
    write_text(ctx, kept, ids);
    ctx.out << "task " << to_string(name) << ": " << result.kept_record_ids.size() << " of " << records.size()
            << " records kept, " << result.labels.num_classes() << " classes\n";
    ctx.manifest.results = {{"kept", result.kept_record_ids.size()}, {"classes", result.labels.num_classes()}};
}

// ---- eval

struct EvalArgs {
    std::string preds, labels, bootstrap, plan_out, metrics = "auc,fmax,fbeta,gbeta", name, out;
    std::string train_preds, train_labels;
    std::optional<double> tau;
    std::uint64_t iters = 1000;
    double beta = 2.0, alpha = 0.05;
    bool exclude_undefined = false;
};

template <typename M>
M select_columns(const M& m, const std::vector<std::size_t>& cols) {
    M out = m;
    out.class_codes.clear();
    auto& dst = [&]() -> Matrix& {
        if constexpr (std::is_same_v<M, LabelMatrix>) return out.values;
        else return out.scores;
    }();
    const auto& src = [&]() -> const Matrix& {
        if constexpr (std::is_same_v<M, LabelMatrix>) return m.values;
        else return m.scores;
    }();
    dst = Matrix(src.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.class_codes.push_back(m.class_codes[cols[j]]);
        for (std::size_t r = 0; r < src.rows(); ++r) dst(r, j) = src(r, cols[j]);
    }
    if constexpr (std::is_same_v<M, LabelMatrix>) {
        if (m.has_likelihoods()) {
            out.likelihoods = Matrix(src.rows(), cols.size());
            for (std::size_t j = 0; j < cols.size(); ++j) {
                for (std::size_t r = 0; r < src.rows(); ++r) out.likelihoods(r, j) = m.likelihoods(r, cols[j]);
            }
        }
    }
    return out;
}

RowMetric threshold_metric(const PredictionMatrix& preds, const LabelMatrix& labels, double tau, double beta,
                           ThresholdMetric kind) {
    return [&preds, &labels, tau, beta, kind](std::span<const std::uint32_t> rows) {
        std::vector<std::size_t> idx(rows.begin(), rows.end());
        const auto p = preds.select_rows(idx);
        const auto l = labels.select_rows(idx);
        const auto counts = weighted_confusion(p, l, tau);
        return kind == ThresholdMetric::f_beta ? f_beta(counts, beta).macro : g_beta(counts, beta).macro;
    };
}

void cmd_eval(Context& ctx, const EvalArgs& a) {
    const auto labels = load_labels(ctx, a.labels);
    const auto preds = align_to(load_preds(ctx, a.preds), labels.record_ids, labels.class_codes);
    // With --exclude-undefined, AUC and the bootstrap constraint only see
    // classes that have both outcomes in the evaluated set.
    std::vector<std::size_t> defined;
    for (std::size_t c = 0; c < labels.num_classes(); ++c) {
        double pos = 0;
        for (std::size_t r = 0; r < labels.num_records(); ++r) pos += labels.values(r, c);
        if (!a.exclude_undefined || (pos > 0 && pos < static_cast<double>(labels.num_records()))) defined.push_back(c);
    }
    if (defined.empty()) throw DataError("no class has both positives and negatives");
    if (defined.size() < labels.num_classes()) {
        ctx.err << "excluding " << labels.num_classes() - defined.size() << " classes without both outcomes from AUC\n";
    }
    const auto auc_labels = select_columns(labels, defined);
    const auto auc_preds = select_columns(preds, defined);

    std::vector<std::string> metrics;
    for (const auto& m : split(a.metrics, ',')) {
        const std::string t(trim(m));
        if (t != "auc" && t != "fmax" && t != "fbeta" && t != "gbeta") throw ArgumentError("unknown metric: " + t);
        metrics.push_back(t);
    }
    if (metrics.empty()) throw ArgumentError("no metrics requested");

    std::optional<LabelMatrix> train_labels;
    std::optional<PredictionMatrix> train_preds;
    if (!a.train_preds.empty() || !a.train_labels.empty()) {
        if (a.train_preds.empty() || a.train_labels.empty()) {
            throw ArgumentError("--train-preds and --train-labels go together");
        }
        train_labels = load_labels(ctx, a.train_labels);
        train_preds = align_to(load_preds(ctx, a.train_preds), train_labels->record_ids, train_labels->class_codes);
    }
    const auto threshold_for = [&](ThresholdMetric kind) {
        if (a.tau) return *a.tau;
        if (!train_preds) throw ArgumentError("threshold metrics need --tau or --train-preds/--train-labels");
        return optimize_threshold(*train_preds, *train_labels, kind, a.beta);
    };

    std::optional<BootstrapPlan> plan;
    if (a.bootstrap == "new") {
        PlanOptions po;
        po.n_iterations = a.iters;
        po.master_seed = ctx.seed;
        po.threads = ctx.threads;
        plan = make_plan(auc_labels, po);
        if (!a.plan_out.empty()) {
            save_plan(a.plan_out, *plan);
            wrote(ctx, a.plan_out);
        }
    } else if (!a.bootstrap.empty()) {
        ctx.manifest.add_input(a.bootstrap);
        plan = load_plan(a.bootstrap);
        if (plan->n_records != labels.num_records()) {
            throw DataError("bootstrap plan is for " + std::to_string(plan->n_records) + " records, labels have " +
                            std::to_string(labels.num_records()));
        }
    }

    const std::string name = a.name.empty() ? fs::path(a.preds).stem().string() : a.name;
    std::vector<std::string> header{"model"}, row{name};
    nlohmann::json results = nlohmann::json::object();
    for (const auto& m : metrics) {
        double point = 0.0;
        std::optional<double> tau;
        RowMetric rm;
        if (m == "auc") {
            point = macro_auc(auc_preds, auc_labels).macro;
            rm = macro_auc_metric(auc_preds, auc_labels);
            header.push_back("AUC");
        } else if (m == "fmax") {
            const auto f = fmax(preds, labels);
            point = f.fmax;
            tau = f.tau;
            rm = fmax_metric(preds, labels);
            header.push_back("Fmax");
        } else {
            const auto kind = m == "fbeta" ? ThresholdMetric::f_beta : ThresholdMetric::g_beta;
            tau = threshold_for(kind);
            const auto counts = weighted_confusion(preds, labels, *tau);
            point = kind == ThresholdMetric::f_beta ? f_beta(counts, a.beta).macro : g_beta(counts, a.beta).macro;
            rm = threshold_metric(preds, labels, *tau, a.beta, kind);
            header.push_back((kind == ThresholdMetric::f_beta ? "Fbeta=" : "Gbeta=") + format_double(a.beta));
        }
        nlohmann::json r = {{"point", point}};
        if (tau) r["tau"] = *tau;
        if (plan) {
            auto rep = bootstrap_ci(rm, *plan, a.alpha, ctx.threads);
            rep.point = point;
            rep.formatted = format_pm(point, rep.lower, rep.upper);
            r["lower"] = rep.lower;
            r["upper"] = rep.upper;
            r["formatted"] = rep.formatted;
            row.push_back(rep.formatted);
        } else {
            r["formatted"] = fmt3(point);
            row.push_back(fmt3(point));
        }
        results[header.back()] = r;
    }
    std::string line, head;
    for (std::size_t i = 0; i < row.size(); ++i) {
        head += (i ? " " : "") + header[i];
        line += (i ? " " : "") + row[i];
    }
    ctx.out << head << "\n" << line << "\n";
    ctx.manifest.results = {{"model", name}, {"metrics", results}};
    if (!a.out.empty()) {
        std::string tsv;
        for (std::size_t i = 0; i < row.size(); ++i) tsv += (i ? "\t" : "") + header[i];
        tsv += "\n";
        for (std::size_t i = 0; i < row.size(); ++i) tsv += (i ? "\t" : "") + row[i];
        write_text(ctx, a.out, tsv + "\n", true);
    }
}

// ---- ensemble

void cmd_ensemble(Context& ctx, const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<PredictionMatrix> members;
    for (const auto& p : inputs) members.push_back(load_preds(ctx, p));
    write_predictions(out, ensemble_average(members));
    wrote(ctx, out, true);
    ctx.out << "averaged " << members.size() << " prediction files\n";
}

// ---- hierarchy

Ontology load_ontology(Context& ctx, const std::string& path) {
    if (!path.empty()) {
        ctx.manifest.add_input(path);
        return parse_ontology(path);
    }
    return load_data(ctx).ontology;
}

void cmd_hierarchy(Context& ctx, const std::string& preds_path, const std::string& labels_path,
                   const std::string& mode, const std::string& ontology, const std::string& out) {
    const auto labels = load_labels(ctx, labels_path);
    const auto preds = align_to(load_preds(ctx, preds_path), labels.record_ids, labels.class_codes);
    const auto h = Hierarchy::from_ontology(load_ontology(ctx, ontology));
    const auto report = decompose_auc(preds, labels, h, parse_propagation_mode(mode));
    ctx.out << report.render_tree();
    if (!out.empty()) write_text(ctx, out, report.render_csv(), true);
}

// ---- stratify

void cmd_stratify(Context& ctx, const std::string& preds_path, const std::string& labels_path,
                  const std::string& target, std::size_t k, std::size_t n_init, const std::string& prefix) {
    const auto labels = load_labels(ctx, labels_path);
    const auto preds = align_to(load_preds(ctx, preds_path), labels.record_ids, labels.class_codes);
    KMeansOptions o;
    o.k = k;
    o.seed = ctx.seed;
    o.n_init = n_init;
    const auto rep = stratify_class(preds, labels, target, o);
    ctx.out << rep.render_summary();
    if (rep.warning) ctx.err << "warning: " << *rep.warning << "\n";

    const auto col = static_cast<std::size_t>(
        std::find(labels.class_codes.begin(), labels.class_codes.end(), target) - labels.class_codes.begin());
    std::unordered_map<std::string, std::size_t> cluster;
    for (std::size_t i = 0; i < rep.positive_ids.size(); ++i) cluster[rep.positive_ids[i]] = rep.cluster_of[i];
    std::string roc = "series,threshold,fpr,tpr\n";
    const auto add_series = [&](const std::string& name, std::optional<std::size_t> only) {
        std::vector<double> s, y;
        for (std::size_t r = 0; r < labels.num_records(); ++r) {
            const bool pos = labels.values(r, col) == 1.0;
            if (pos && only && cluster.at(labels.record_ids[r]) != *only) continue;
            s.push_back(preds.scores(r, col));
            y.push_back(pos ? 1.0 : 0.0);
        }
        for (const auto& p : roc_curve(s, y)) {
            roc += name + "," + (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "," +
                   format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
        }
    };
    add_series("all", std::nullopt);
    for (std::size_t c = 0; c < rep.clusters.size(); ++c) add_series("cluster" + std::to_string(c), c);

    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : rep.clusters) {
        clusters.push_back({{"size", c.size}, {"auc", c.auc ? nlohmann::json(*c.auc) : nlohmann::json()}});
    }
    ctx.manifest.results = {{"class", target}, {"overall_auc", rep.overall_auc}, {"clusters", clusters}};
    if (!prefix.empty()) {
        write_text(ctx, prefix + ".summary.csv", rep.render_summary(), true);
        write_text(ctx, prefix + ".assignments.csv", rep.render_assignments());
        write_text(ctx, prefix + ".roc.csv", roc);
    }
}

// ---- uncertainty

void cmd_uncertainty(Context& ctx, const std::string& dir, const std::string& labels_path, const std::string& prefix) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".bin" || ext == ".csv")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.size() < 2) throw DataError("ensemble directory needs at least two prediction files");
    const auto labels = load_labels(ctx, labels_path);
    if (!labels.has_likelihoods()) throw DataError("labels have no likelihood sidecar");
    std::vector<PredictionMatrix> members;
    for (const auto& f : files) {
        members.push_back(align_to(load_preds(ctx, f), labels.record_ids, labels.class_codes));
    }
    const auto table = uncertainty_vs_likelihood(ensemble_uncertainty(members), labels);
    ctx.out << table.render_buckets();
    if (!prefix.empty()) {
        write_text(ctx, prefix + ".buckets.csv", table.render_buckets(), true);
        write_text(ctx, prefix + ".rows.csv", table.render_rows());
    }
}

// ---- splits

struct SplitArgs {
    std::size_t k = 10;
    std::string mode = "patient", folds, fraction = "1", out;
    bool clean_tail = false, keep_tail = false;
};

void cmd_split_make(Context& ctx, const SplitArgs& a) {
    const auto ds = load_data(ctx);
    SplitOptions o;
    o.k = a.k;
    o.mode = parse_split_mode(a.mode);
    o.seed = ctx.seed;
    o.clean_tail = a.clean_tail;
    o.keep_existing_tail = a.keep_tail;
    const auto f = stratified_folds(ds.records, o);
    write_text(ctx, a.out, f.serialize(), true);
    std::map<int, std::size_t> sizes;
    for (int v : f.folds) ++sizes[v];
    ctx.out << "fold sizes";
    for (const auto& [fold, n] : sizes) ctx.out << " " << fold << ":" << n;
    ctx.out << "\n";
}

void cmd_split_roles(Context& ctx, const SplitArgs& a) {
    ctx.manifest.add_input(a.folds);
    const auto f = FoldAssignment::parse(read_file(a.folds));
    const auto roles = split_roles(f);
    ctx.out << "train " << roles.train.size() << ", val " << roles.val.size() << ", test " << roles.test.size() << "\n";
    if (a.out.empty()) return;
    std::vector<std::string> role(f.folds.size());
    for (auto i : roles.train) role[i] = "train";
    for (auto i : roles.val) role[i] = "val";
    for (auto i : roles.test) role[i] = "test";
    std::string s = "record_id,role\n";
    for (std::size_t i = 0; i < role.size(); ++i) s += csv_escape(f.record_ids[i]) + "," + role[i] + "\n";
    write_text(ctx, a.out, s, true);
}

void cmd_split_subsample(Context& ctx, const SplitArgs& a) {
    auto ds = load_data(ctx);
    if (!a.folds.empty()) apply_fold_file(ctx, ds.records, a.folds);
    FoldAssignment f;
    f.k = a.k;
    for (const auto& r : ds.records) {
        f.record_ids.push_back(r.record_id);
        f.folds.push_back(r.fold);
    }
    std::vector<Record> train;
    for (auto i : split_roles(f).train) train.push_back(ds.records[i]);
    const auto picked = subsample_train(train, parse_fraction(a.fraction), ctx.seed, a.k);
    std::string s;
    for (auto i : picked) s += train[i].record_id + "\n";
    write_text(ctx, a.out, s, true);
    ctx.out << picked.size() << " of " << train.size() << " training records\n";
    ctx.manifest.results = {{"selected", picked.size()}, {"train", train.size()}};
}

// ---- baselines

struct WaveletArgs {
    std::string task = "all", train_folds = "1-8", val_folds = "9", folds = "10", fold_file, features, model, out;
    std::size_t levels = 5, window = 0;
    int rate = 100;
    TrainConfig train;
};

// Rows follow `records`. Features come from the cache file when given.
Matrix record_features(Context& ctx, const std::vector<Record>& records, const fs::path& data_dir,
                       const FeatureConfig& cfg, const std::string& cache, std::vector<std::string>* names) {
    std::vector<std::string> ids;
    for (const auto& r : records) ids.push_back(r.record_id);
    if (!cache.empty()) {
        const auto f = load_preds(ctx, cache);
        if (names) *names = f.class_codes;
        return align_to(f, ids, f.class_codes).scores;
    }
    if (records.empty()) throw DataError("no records selected");
    const auto first = load_record_signal(records[0], data_dir);
    if (names) *names = feature_names(first.lead_names, cfg);
    Matrix out(records.size(), feature_dim(first.samples.rows(), cfg));
    parallel_for(records.size(), ctx.threads, [&](std::size_t i) {
        const auto sig = load_record_signal(records[i], data_dir);
        if (sig.samples.rows() != first.samples.rows()) throw DataError(records[i].record_id + ": unexpected lead count");
        const auto f = wavelet_features(sig.samples, cfg);
        std::copy(f.begin(), f.end(), out.row(i).begin());
    });
    return out;
}

void cmd_naive_train(Context& ctx, const std::string& labels_path, const std::string& out) {
    const auto labels = load_labels(ctx, labels_path);
    const auto freq = naive_fit(labels);
    std::string s = "class,frequency\n";
    for (std::size_t c = 0; c < freq.size(); ++c) s += csv_escape(labels.class_codes[c]) + "," + format_double(freq[c]) + "\n";
    write_text(ctx, out, s, true);
}

void cmd_naive_predict(Context& ctx, const std::string& model, const std::string& labels_path, const std::string& out) {
    ctx.manifest.add_input(model);
    const auto table = read_csv(model);
    const auto cls = table.find_any({"class"});
    const auto fr = table.find_any({"frequency"});
    if (!cls || !fr) throw DataError(model + ": expected class,frequency columns");
    std::vector<std::string> codes;
    std::vector<double> freq;
    for (const auto& row : table.rows) {
        const auto v = parse_double(row[*fr]);
        if (!v) throw DataError(model + ": bad frequency");
        codes.push_back(row[*cls]);
        freq.push_back(*v);
    }
    const auto labels = load_labels(ctx, labels_path);
    write_predictions(out, naive_predict(freq, codes, labels.record_ids));
    wrote(ctx, out, true);
}

void cmd_wavelet_features(Context& ctx, const WaveletArgs& a) {
    auto ds = load_data(ctx, a.rate);
    apply_fold_file(ctx, ds.records, a.fold_file);
    const auto records = select_folds(ds.records, a.folds);
    FeatureConfig cfg{a.levels, a.window};
    std::vector<std::string> names;
    PredictionMatrix f;
    f.scores = record_features(ctx, records, ds.root, cfg, "", &names);
    f.class_codes = names;
    for (const auto& r : records) f.record_ids.push_back(r.record_id);
    write_predictions(a.out, f);
    wrote(ctx, a.out, true);
    ctx.out << records.size() << " records x " << names.size() << " features\n";
}

void cmd_wavelet_train(Context& ctx, const WaveletArgs& a) {
    auto ds = load_data(ctx, a.rate);
    apply_fold_file(ctx, ds.records, a.fold_file);
    const auto train_folds = parse_folds(a.train_folds);
    const auto val_folds = a.val_folds.empty() ? std::set<int>{} : parse_folds(a.val_folds);
    std::set<int> both = train_folds;
    both.insert(val_folds.begin(), val_folds.end());
    const auto records = filter_by_folds(ds.records, both);
    const auto task = build_task(records, ds.ontology, make_task_spec(parse_task_name(a.task), ds.ontology));
    if (task.labels.num_classes() == 0) throw ArgumentError("wavelet baseline needs a classification task");

    std::unordered_map<std::string, const Record*> by_id;
    for (const auto& r : records) by_id[r.record_id] = &r;
    std::vector<Record> kept;
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < task.labels.num_records(); ++i) {
        const Record& r = *by_id.at(task.labels.record_ids[i]);
        (train_folds.count(r.fold) ? tr : va).push_back(i);
        kept.push_back(r);
    }
    if (tr.empty()) throw DataError("no training records in folds " + a.train_folds);

    FeatureConfig cfg{a.levels, a.window};
    std::vector<std::string> names;
    const auto x = record_features(ctx, kept, ds.root, cfg, a.features, &names);
    const auto x_tr = x.select_rows(std::span<const std::size_t>(tr));
    const auto x_va = x.select_rows(std::span<const std::size_t>(va));
    const auto std_ = Standardizer::fit(x_tr);
    if (std_.output_dim() < x.cols()) {
        ctx.err << "dropped " << x.cols() - std_.output_dim() << " constant feature columns\n";
    }
    auto cfg_train = a.train;
    cfg_train.seed = ctx.seed;
    const auto res = shallow_train(std_.apply(x_tr), task.labels.values.select_rows(std::span<const std::size_t>(tr)),
                                   std_.apply(x_va), task.labels.values.select_rows(std::span<const std::size_t>(va)),
                                   cfg_train);
    WaveletModel model{cfg, names, task.labels.class_codes, std_, res.net};
    save_model(a.out, model);
    wrote(ctx, a.out, true);
    ctx.out << "trained on " << tr.size() << " records, validated on " << va.size() << "; ";
    if (res.best_val_auc) ctx.out << "best validation AUC " << fmt3(*res.best_val_auc) << " at epoch " << res.best_epoch;
    else ctx.out << "no validation set, kept the last epoch";
    ctx.out << "\n";
    nlohmann::json losses = res.train_loss;
    ctx.manifest.results = {{"train_records", tr.size()},
                            {"val_records", va.size()},
                            {"best_epoch", res.best_epoch},
                            {"train_loss", losses},
                            {"dropped_features", x.cols() - std_.output_dim()}};
    if (res.best_val_auc) ctx.manifest.results["best_val_auc"] = *res.best_val_auc;
}

void cmd_wavelet_predict(Context& ctx, const WaveletArgs& a) {
    ctx.manifest.add_input(a.model);
    const auto model = load_model(a.model);
    auto ds = load_data(ctx, a.rate);
    apply_fold_file(ctx, ds.records, a.fold_file);
    const auto records = select_folds(ds.records, a.folds);
    const auto x = record_features(ctx, records, ds.root, model.features, a.features, nullptr);
    PredictionMatrix p;
    p.class_codes = model.class_codes;
    for (const auto& r : records) p.record_ids.push_back(r.record_id);
    p.scores = shallow_predict(model.net, model.standardizer.apply(x));
    write_predictions(a.out, p);
    wrote(ctx, a.out, true);
    ctx.out << "scored " << records.size() << " records\n";
}

// ---- lrp

void cmd_lrp(Context& ctx, const std::string& model_path, const std::string& record, const std::string& cls,
             double epsilon, const std::string& features, std::size_t top, const std::string& out) {
    ctx.manifest.add_input(model_path);
    const auto model = load_model(model_path);
    const auto it = std::find(model.class_codes.begin(), model.class_codes.end(), cls);
    if (it == model.class_codes.end()) throw ArgumentError("model has no class " + cls);
    std::vector<double> raw;
    if (!features.empty()) {
        const auto f = load_preds(ctx, features);
        const std::vector<std::string> id{record};
        const auto row = align_to(f, id, model.feature_names);
        raw.assign(row.scores.row(0).begin(), row.scores.row(0).end());
    } else {
        const auto ds = load_data(ctx);
        const auto r = std::find_if(ds.records.begin(), ds.records.end(),
                                    [&](const Record& x) { return x.record_id == record; });
        if (r == ds.records.end()) throw DataError("no record " + record);
        raw = wavelet_features(load_record_signal(*r, ds.root).samples, model.features);
    }
    const auto rel = model_relevance(model, raw, static_cast<std::size_t>(it - model.class_codes.begin()), epsilon);
    std::vector<std::size_t> order(rel.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return std::fabs(rel[x]) > std::fabs(rel[y]); });
    std::string table = "feature,value,relevance\n";
    for (auto i : order) {
        table += csv_escape(model.feature_names[i]) + "," + format_double(raw[i]) + "," + format_double(rel[i]) + "\n";
    }
    for (std::size_t n = 0; n < std::min(top, order.size()); ++n) {
        ctx.out << model.feature_names[order[n]] << "\t" << format_double(rel[order[n]]) << "\n";
    }
    if (!out.empty()) write_text(ctx, out, table, true);
}

// ---- report

void cmd_report(Context& ctx, const std::string& runs, const std::string& prefix) {
    std::vector<fs::path> manifests;
    for (const auto& e : fs::recursive_directory_iterator(runs)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 14 && name.ends_with(".manifest.json")) manifests.push_back(e.path());
    }
    std::sort(manifests.begin(), manifests.end());
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> rows;
    nlohmann::json runs_json = nlohmann::json::array();
    for (const auto& p : manifests) {
        if (!prefix.empty() && fs::absolute(p).string().starts_with(fs::absolute(prefix).string())) continue;
        const auto m = Manifest::load(p);
        std::string command;
        for (const auto& a : m.argv) {
            if (a.starts_with("-")) break;
            command += (command.empty() ? "" : " ") + a;
        }
        runs_json.push_back({{"manifest", p.string()}, {"command", command}, {"seed", m.seed}, {"results", m.results}});
        if (!m.results.contains("metrics")) continue;
        std::map<std::string, std::string> cells;
        for (const auto& [metric, r] : m.results["metrics"].items()) {
            if (std::find(columns.begin(), columns.end(), metric) == columns.end()) columns.push_back(metric);
            cells[metric] = r.value("formatted", "");
        }
        rows.emplace_back(m.results.value("model", p.stem().string()), cells);
    }
    std::string table = "model";
    for (const auto& c : columns) table += "," + c;
    table += "\n";
    for (const auto& [model, cells] : rows) {
        table += csv_escape(model);
        for (const auto& c : columns) table += "," + (cells.count(c) ? cells.at(c) : std::string());
        table += "\n";
    }
    ctx.out << manifests.size() << " runs, " << rows.size() << " evaluations\n" << table;
    if (!prefix.empty()) {
        write_text(ctx, prefix + ".csv", table, true);
        write_text(ctx, prefix + ".json", runs_json.dump(2) + "\n");
    }
}

}  // namespace

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool write_manifest);

namespace {

// Re-runs a recorded command and compares output digests.
int cmd_replay(Context& ctx, const std::string& path) {
    const auto m = Manifest::load(path);
    const auto here = fs::current_path();
    if (!m.cwd.empty()) fs::current_path(m.cwd);
    std::ostringstream sink;
    int code = 0;
    try {
        code = run_impl(m.argv, sink, ctx.err, true);
    } catch (...) {
        fs::current_path(here);
        throw;
    }
    std::size_t bad = 0;
    for (const auto& [file, digest] : m.outputs) {
        const bool same = fs::exists(file) && sha256_file(file) == digest;
        if (!same) {
            ctx.out << "differs: " << file << "\n";
            ++bad;
        }
    }
    fs::current_path(here);
    if (code != 0) return code;
    ctx.out << (bad ? "replay differs in " + std::to_string(bad) + " outputs\n"
                    : "replay reproduced " + std::to_string(m.outputs.size()) + " outputs\n");
    return bad ? 1 : 0;
}

}  // namespace

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool write_manifest) {
    Context ctx(out, err);
    CLI::App app{"ECG benchmark evaluation toolkit", "ecgbench"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "key = value file mirroring the command-line flags");
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);
    app.add_option("--threads", ctx.threads, "worker threads")->check(CLI::Range(1u, 256u));
    app.add_option("--seed", ctx.seed, "seed for all randomness");
    app.add_option("--data", ctx.data_dir, "dataset directory")->envname("ECGBENCH_DATA");
    app.add_option("--manifest", ctx.manifest_path, "manifest path (default: <primary output>.manifest.json)");

    std::function<int()> action;
    const auto set = [&](std::function<void()> f) {
        action = [f] {
            f();
            return 0;
        };
    };

    // ingest validate
    auto* ingest = app.add_subcommand("ingest", "dataset checks")->require_subcommand(1);
    auto* validate = ingest->add_subcommand("validate", "record, patient and statement counts");
    int rate = 100;
    std::string out_path;
    validate->add_option("data-dir", ctx.data_dir, "dataset directory");
    validate->add_option("--sampling-rate", rate)->check(CLI::IsMember({100, 500}));
    validate->add_option("--out", out_path, "also write the report here");
    validate->callback([&] { set([&] { cmd_ingest_validate(ctx, rate, out_path); }); });

    // task build
    TaskArgs ta;
    auto* task = app.add_subcommand("task", "label matrices")->require_subcommand(1);
    auto* build = task->add_subcommand("build", "label matrix and kept-record list for a task");
    build->add_option("--task", ta.task, "all, diag, sub_diag, super_diag, form, rhythm, quality, age, gender");
    build->add_option("--folds", ta.folds, "fold list, e.g. 1-8");
    build->add_option("--fold-file", ta.fold_file, "fold assignment overriding the dataset's");
    build->add_option("--subpop", ta.subpop, "all, healthy or non_healthy");
    build->add_option("--sampling-rate", ta.rate)->check(CLI::IsMember({100, 500}));
    build->add_option("--out", ta.out, "label file (.csv or .bin)")->required();
    build->add_option("--kept-out", ta.kept_out, "kept ids (default <out>.kept.txt)");
    build->callback([&] { set([&] { cmd_task_build(ctx, ta); }); });

    // eval
    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "metrics with optional bootstrap intervals");
    eval->add_option("--preds", ea.preds)->required();
    eval->add_option("--labels", ea.labels)->required();
    eval->add_option("--bootstrap", ea.bootstrap, "plan file, or 'new'");
    eval->add_option("--iters", ea.iters, "bootstrap iterations for a new plan")->check(CLI::PositiveNumber);
    eval->add_option("--plan-out", ea.plan_out, "save a new plan here");
    eval->add_option("--metrics", ea.metrics, "comma list of auc,fmax,fbeta,gbeta");
    eval->add_option("--beta", ea.beta)->check(CLI::PositiveNumber);
    eval->add_option("--alpha", ea.alpha)->check(CLI::Range(1e-6, 0.999));
    eval->add_option("--tau", ea.tau, "fixed threshold for fbeta/gbeta");
    eval->add_option("--train-preds", ea.train_preds, "training-fold predictions for the threshold");
    eval->add_option("--train-labels", ea.train_labels);
    eval->add_option("--name", ea.name, "row label (default: predictions file stem)");
    eval->add_option("--out", ea.out, "tab-separated result row");
    eval->add_flag("--exclude-undefined", ea.exclude_undefined, "skip classes without positives or negatives");
    eval->callback([&] { set([&] { cmd_eval(ctx, ea); }); });

    // ensemble
    std::vector<std::string> ens_in;
    std::string ens_out;
    auto* ens = app.add_subcommand("ensemble", "average prediction files");
    ens->add_option("--preds", ens_in)->required()->expected(1, -1);
    ens->add_option("--out", ens_out)->required();
    ens->callback([&] { set([&] { cmd_ensemble(ctx, ens_in, ens_out); }); });

    // hierarchy decompose
    std::string h_preds, h_labels, h_mode = "sum_clip", h_ont, h_out;
    auto* hier = app.add_subcommand("hierarchy", "hierarchical analyses")->require_subcommand(1);
    auto* dec = hier->add_subcommand("decompose", "AUC per node of the diagnostic tree");
    dec->add_option("--preds", h_preds, "statement-level predictions")->required();
    dec->add_option("--labels", h_labels, "statement-level labels")->required();
    dec->add_option("--mode", h_mode, "sum_clip, max or mean");
    dec->add_option("--ontology", h_ont, "statement table (default: from --data)");
    dec->add_option("--out", h_out, "csv report");
    dec->callback([&] { set([&] { cmd_hierarchy(ctx, h_preds, h_labels, h_mode, h_ont, h_out); }); });

    // stratify
    std::string s_preds, s_labels, s_class, s_prefix;
    std::size_t s_k = 2, s_init = 10;
    auto* strat = app.add_subcommand("stratify", "cluster the positives of one class");
    strat->add_option("--preds", s_preds)->required();
    strat->add_option("--labels", s_labels)->required();
    strat->add_option("--class", s_class)->required();
    strat->add_option("--k", s_k)->check(CLI::PositiveNumber);
    strat->add_option("--n-init", s_init)->check(CLI::PositiveNumber);
    strat->add_option("--out-prefix", s_prefix, "writes .summary.csv, .assignments.csv, .roc.csv");
    strat->callback([&] { set([&] { cmd_stratify(ctx, s_preds, s_labels, s_class, s_k, s_init, s_prefix); }); });

    // uncertainty
    std::string u_dir, u_labels, u_prefix;
    auto* unc = app.add_subcommand("uncertainty", "ensemble spread against annotator likelihood");
    unc->add_option("--ensemble-dir", u_dir)->required()->check(CLI::ExistingDirectory);
    unc->add_option("--labels", u_labels, "labels with a likelihood sidecar")->required();
    unc->add_option("--out-prefix", u_prefix, "writes .buckets.csv and .rows.csv");
    unc->callback([&] { set([&] { cmd_uncertainty(ctx, u_dir, u_labels, u_prefix); }); });

    // split
    SplitArgs sa;
    auto* splt = app.add_subcommand("split", "cross-validation folds")->require_subcommand(1);
    auto* make = splt->add_subcommand("make", "stratified folds");
    make->add_option("--k", sa.k)->check(CLI::Range(2, 1000));
    make->add_option("--mode", sa.mode, "patient or record");
    auto* clean = make->add_flag("--clean-tail", sa.clean_tail, "last two folds only human-validated records");
    make->add_flag("--keep-tail", sa.keep_tail, "keep the dataset's last two folds, re-split the rest")->excludes(clean);
    make->add_option("--out", sa.out)->required();
    make->callback([&] { set([&] { cmd_split_make(ctx, sa); }); });
    auto* roles = splt->add_subcommand("roles", "train/val/test roles of a fold file");
    roles->add_option("--folds", sa.folds)->required();
    roles->add_option("--out", sa.out);
    roles->callback([&] { set([&] { cmd_split_roles(ctx, sa); }); });
    auto* sub = splt->add_subcommand("subsample", "stratified subset of the training folds");
    sub->add_option("--folds", sa.folds, "fold file (default: the dataset's folds)");
    sub->add_option("--fraction", sa.fraction, "folds' worth of data, e.g. 1/8")->required();
    sub->add_option("--k", sa.k)->check(CLI::Range(3, 1000));
    sub->add_option("--out", sa.out)->required();
    sub->callback([&] { set([&] { cmd_split_subsample(ctx, sa); }); });

    // baseline
    auto* base = app.add_subcommand("baseline", "trainable baselines")->require_subcommand(1);
    auto* naive = base->add_subcommand("naive", "training-set frequency predictor")->require_subcommand(1);
    std::string n_labels, n_model, n_out;
    auto* ntrain = naive->add_subcommand("train");
    ntrain->add_option("--labels", n_labels, "training labels")->required();
    ntrain->add_option("--out", n_out)->required();
    ntrain->callback([&] { set([&] { cmd_naive_train(ctx, n_labels, n_out); }); });
    auto* npred = naive->add_subcommand("predict");
    npred->add_option("--model", n_model)->required();
    npred->add_option("--labels", n_labels, "file whose record ids are scored")->required();
    npred->add_option("--out", n_out)->required();
    npred->callback([&] { set([&] { cmd_naive_predict(ctx, n_model, n_labels, n_out); }); });

    WaveletArgs wa;
    auto* wav = base->add_subcommand("wavelet", "db4 features and a shallow network")->require_subcommand(1);
    const auto common = [&](CLI::App* c) {
        c->add_option("--fold-file", wa.fold_file);
        c->add_option("--features", wa.features, "feature file from 'baseline wavelet features'");
        c->add_option("--sampling-rate", wa.rate)->check(CLI::IsMember({100, 500}));
        c->add_option("--out", wa.out)->required();
    };
    auto* wfeat = wav->add_subcommand("features", "compute and store features");
    common(wfeat);
    std::string feat_folds;
    wfeat->add_option("--folds", feat_folds, "fold list (default: all)");
    wfeat->add_option("--levels", wa.levels)->check(CLI::PositiveNumber);
    wfeat->add_option("--window", wa.window, "window length in samples (0: whole record)");
    wfeat->callback([&] {
        wa.folds = feat_folds;
        set([&] { cmd_wavelet_features(ctx, wa); });
    });
    auto* wtrain = wav->add_subcommand("train");
    common(wtrain);
    wtrain->add_option("--task", wa.task);
    wtrain->add_option("--train-folds", wa.train_folds);
    wtrain->add_option("--val-folds", wa.val_folds, "empty: no early selection");
    wtrain->add_option("--levels", wa.levels)->check(CLI::PositiveNumber);
    wtrain->add_option("--window", wa.window);
    wtrain->add_option("--hidden", wa.train.hidden)->check(CLI::PositiveNumber);
    wtrain->add_option("--epochs", wa.train.epochs)->check(CLI::PositiveNumber);
    wtrain->add_option("--batch", wa.train.batch)->check(CLI::PositiveNumber);
    wtrain->add_option("--lr", wa.train.lr)->check(CLI::PositiveNumber);
    wtrain->add_option("--weight-decay", wa.train.weight_decay)->check(CLI::NonNegativeNumber);
    wtrain->callback([&] { set([&] { cmd_wavelet_train(ctx, wa); }); });
    auto* wpred = wav->add_subcommand("predict");
    common(wpred);
    wpred->add_option("--model", wa.model)->required();
    wpred->add_option("--folds", wa.folds);
    wpred->callback([&] { set([&] { cmd_wavelet_predict(ctx, wa); }); });

    // lrp
    std::string l_model, l_record, l_class, l_features, l_out;
    double l_eps = 0.1;
    std::size_t l_top = 20;
    auto* lrp = app.add_subcommand("lrp", "epsilon-rule relevance of the wavelet model's inputs");
    lrp->add_option("--model", l_model)->required();
    lrp->add_option("--record", l_record)->required();
    lrp->add_option("--class", l_class)->required();
    lrp->add_option("--epsilon", l_eps)->check(CLI::NonNegativeNumber);
    lrp->add_option("--features", l_features, "feature file instead of reading the signal");
    lrp->add_option("--top", l_top, "rows printed");
    lrp->add_option("--out", l_out, "full csv table");
    lrp->callback([&] { set([&] { cmd_lrp(ctx, l_model, l_record, l_class, l_eps, l_features, l_top, l_out); }); });

    // report
    std::string r_runs, r_out;
    auto* report = app.add_subcommand("report", "collect evaluation results from run manifests");
    report->add_option("--runs", r_runs)->required()->check(CLI::ExistingDirectory);
    report->add_option("--out-prefix", r_out, "writes .csv and .json");
    report->callback([&] { set([&] { cmd_report(ctx, r_runs, r_out); }); });

    // replay
    std::string m_path;
    auto* replay = app.add_subcommand("replay", "re-run a manifest and compare outputs");
    replay->add_option("manifest", m_path)->required()->check(CLI::ExistingFile);
    replay->callback([&] { action = [&] { return cmd_replay(ctx, m_path); }; });

    std::vector<std::string> argv_store{"ecgbench"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const int code = action();
        if (code == 0 && write_manifest && !replay->parsed()) {
            fs::path mpath = ctx.manifest_path;
            if (mpath.empty() && !ctx.primary_output.empty()) mpath = ctx.primary_output.string() + ".manifest.json";
            if (!mpath.empty()) {
                ctx.manifest.argv = args;
                ctx.manifest.cwd = fs::current_path().string();
                ctx.manifest.config = app.config_to_str(true, false);
                ctx.manifest.seed = ctx.seed;
                ctx.manifest.threads = ctx.threads;
                ctx.manifest.data_dir = ctx.data_dir;
                ctx.manifest.save(mpath);
            }
        }
        return code;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return run_impl(args, out, err, true);
}

}  // namespace ecgbench::cli
