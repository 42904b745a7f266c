#include <doctest.h>

#include <algorithm>
#include <set>

#include "ecgbench/error.hpp"
#include "ecgbench/hierarchy.hpp"
#include "ecgbench/ingest.hpp"
#include "ecgbench/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ecgbench;

namespace {

// S1 -> {A -> {a1, a2, a3}, B -> {b1}};  S2 -> {C -> {c1, c2}}
Hierarchy toy_tree() {
    Hierarchy h;
    h.statement_parent = {{"a1", "A"}, {"a2", "A"}, {"a3", "A"}, {"b1", "B"}, {"c1", "C"}, {"c2", "C"}};
    h.sub_parent = {{"A", "S1"}, {"B", "S1"}, {"C", "S2"}};
    return h;
}

const std::vector<std::string> kLeaves{"a1", "a2", "a3", "b1", "c1", "c2"};

PredictionMatrix toy_preds(const std::vector<std::vector<double>>& rows) {
    PredictionMatrix p;
    p.class_codes = kLeaves;
    p.scores = Matrix(rows.size(), kLeaves.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        p.record_ids.push_back("r" + std::to_string(i));
        for (std::size_t c = 0; c < kLeaves.size(); ++c) p.scores(i, c) = rows[i][c];
    }
    return p;
}

double column_of(const PredictionMatrix& p, std::size_t row, const std::string& code) {
    const auto c = std::find(p.class_codes.begin(), p.class_codes.end(), code) - p.class_codes.begin();
    return p.scores(row, static_cast<std::size_t>(c));
}

}  // namespace

TEST_CASE("propagation modes on a single parent") {
    Hierarchy h;
    h.statement_parent = {{"x", "P"}, {"y", "P"}, {"z", "P"}, {"only", "Q"}};
    h.sub_parent = {{"P", "S"}, {"Q", "S"}};
    PredictionMatrix p{{"r"}, {"only", "x", "y", "z"}, Matrix(1, 4)};
    p.scores(0, 0) = 0.7;
    p.scores(0, 1) = 0.4;
    p.scores(0, 2) = 0.5;
    p.scores(0, 3) = 0.3;
    const auto sum = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::sum_clip);
    const auto mx = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::max);
    const auto mean = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::mean);
    CHECK(sum.class_codes == std::vector<std::string>{"P", "Q"});
    CHECK(sum.scores(0, 0) == 1.0);
    CHECK(mx.scores(0, 0) == 0.5);
    CHECK(mean.scores(0, 0) == doctest::Approx(0.4).epsilon(1e-15));
    // singleton parent
    CHECK(sum.scores(0, 1) == 0.7);
    CHECK(mx.scores(0, 1) == 0.7);
    CHECK(mean.scores(0, 1) == 0.7);

    PredictionMatrix orphan{{"r"}, {"x", "w"}, Matrix(1, 2)};
    CHECK_THROWS_WITH_AS(propagate_up(orphan, h, HierarchyLevel::sub, PropagationMode::max), doctest::Contains("w"),
                         DataError);
    CHECK_THROWS_AS(parse_propagation_mode("median"), ArgumentError);
}

TEST_CASE("toy three-level tree: hand-computed parents") {
    const auto h = toy_tree();
    const auto p = toy_preds({{0.4, 0.5, 0.3, 0.2, 0.1, 0.6}, {0.25, 0.0, 0.5, 0.75, 0.5, 0.25}});

    auto sub = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::sum_clip);
    auto sup = propagate_up(p, h, HierarchyLevel::super, PropagationMode::sum_clip);
    CHECK(column_of(sub, 0, "A") == 1.0);
    CHECK(column_of(sub, 0, "B") == 0.2);
    CHECK(column_of(sub, 0, "C") == 0.7);
    CHECK(column_of(sup, 0, "S1") == 1.0);
    CHECK(column_of(sup, 0, "S2") == 0.7);
    CHECK(column_of(sub, 1, "A") == 0.75);
    CHECK(column_of(sup, 1, "S1") == 1.0);  // 0.75 + 0.75 clipped
    CHECK(column_of(sup, 1, "S2") == 0.75);

    sub = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::max);
    sup = propagate_up(p, h, HierarchyLevel::super, PropagationMode::max);
    CHECK(column_of(sub, 0, "A") == 0.5);
    CHECK(column_of(sup, 0, "S1") == 0.5);
    CHECK(column_of(sup, 0, "S2") == 0.6);
    CHECK(column_of(sup, 1, "S1") == 0.75);

    sub = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::mean);
    sup = propagate_up(p, h, HierarchyLevel::super, PropagationMode::mean);
    CHECK(column_of(sub, 1, "A") == 0.25);
    CHECK(column_of(sub, 1, "C") == 0.375);
    CHECK(column_of(sup, 1, "S1") == 0.5);  // mean of A=0.25 and B=0.75
    CHECK(column_of(sup, 1, "S2") == 0.375);
}

TEST_CASE("toy tree: 20 random records against a loop oracle") {
    const auto h = toy_tree();
    SplitMix64 rng(17);
    std::vector<std::vector<double>> rows(20, std::vector<double>(6));
    for (auto& r : rows) {
        for (auto& v : r) v = rng.uniform();
    }
    const auto p = toy_preds(rows);
    const std::map<std::string, std::vector<std::size_t>> sub_children{{"A", {0, 1, 2}}, {"B", {3}}, {"C", {4, 5}}};
    const std::map<std::string, std::vector<std::string>> super_children{{"S1", {"A", "B"}}, {"S2", {"C"}}};
    for (auto mode : {PropagationMode::sum_clip, PropagationMode::max, PropagationMode::mean}) {
        const auto sub = propagate_up(p, h, HierarchyLevel::sub, mode);
        const auto sup = propagate_up(p, h, HierarchyLevel::super, mode);
        const auto mx = propagate_up(p, h, HierarchyLevel::super, PropagationMode::max);
        const auto sc = propagate_up(p, h, HierarchyLevel::super, PropagationMode::sum_clip);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::map<std::string, double> sub_expected;
            for (const auto& [name, kids] : sub_children) {
                std::vector<double> v;
                for (auto k : kids) v.push_back(rows[i][k]);
                double agg = 0;
                if (mode == PropagationMode::max) agg = *std::max_element(v.begin(), v.end());
                else {
                    for (double x : v) agg += x;
                    if (mode == PropagationMode::sum_clip) agg = std::min(agg, 1.0);
                    else agg /= double(v.size());
                }
                sub_expected[name] = agg;
                CHECK(column_of(sub, i, name) == agg);
            }
            for (const auto& [name, kids] : super_children) {
                std::vector<double> v;
                for (const auto& k : kids) v.push_back(sub_expected[k]);
                double agg = 0;
                if (mode == PropagationMode::max) agg = *std::max_element(v.begin(), v.end());
                else {
                    for (double x : v) agg += x;
                    if (mode == PropagationMode::sum_clip) agg = std::min(agg, 1.0);
                    else agg /= double(v.size());
                }
                CHECK(column_of(sup, i, name) == agg);
                CHECK(column_of(sup, i, name) >= 0.0);
                CHECK(column_of(sup, i, name) <= 1.0);
                CHECK(column_of(mx, i, name) <= column_of(sc, i, name));
            }
        }
    }
}

TEST_CASE("derived labels and perfect leaf predictions") {
    const auto h = toy_tree();
    SplitMix64 rng(5);
    LabelMatrix l;
    l.class_codes = kLeaves;
    l.values = Matrix(20, 6);
    for (std::size_t i = 0; i < 20; ++i) {
        l.record_ids.push_back("r" + std::to_string(i));
        for (std::size_t c = 0; c < 6; ++c) l.values(i, c) = rng.uniform() < 0.3;
        l.values(i, rng.below(6)) = 1;
    }
    // keep every leaf two-sided
    for (std::size_t c = 0; c < 6; ++c) {
        l.values(c, c) = 1;
        l.values(19 - c, c) = 0;
    }
    for (std::size_t c = 0; c < 6; ++c) l.values(13, c) = 0;
    l.values(13, 4) = 1;  // r13 has only c1: negative for S1

    const auto sub = derive_labels(l, h, HierarchyLevel::sub);
    const auto sup = derive_labels(l, h, HierarchyLevel::super);
    const std::map<std::string, std::vector<std::size_t>> leaves_of{{"A", {0, 1, 2}}, {"B", {3}}, {"C", {4, 5}},
                                                                    {"S1", {0, 1, 2, 3}}, {"S2", {4, 5}}};
    for (std::size_t i = 0; i < 20; ++i) {
        for (const auto& [node, leaves] : leaves_of) {
            double any = 0;
            for (auto c : leaves) any = std::max(any, l.values(i, c));
            const auto& m = node.size() == 1 ? sub : sup;
            const auto col = std::find(m.class_codes.begin(), m.class_codes.end(), node) - m.class_codes.begin();
            CHECK(m.values(i, static_cast<std::size_t>(col)) == any);
        }
    }

    PredictionMatrix perfect{l.record_ids, l.class_codes, l.values};
    const auto report = decompose_auc(perfect, l, h, PropagationMode::sum_clip);
    REQUIRE(report.nodes.size() == 6 + 3 + 2);
    for (const auto& n : report.nodes) {
        REQUIRE(n.auc.has_value());
        CHECK(*n.auc == 1.0);
    }
}

TEST_CASE("decomposition report structure") {
    Hierarchy h;
    h.statement_parent = {{"x", "P"}, {"y", "P"}, {"z", "Z"}};
    h.sub_parent = {{"P", "S"}, {"Z", "S"}};
    // leaf AUCs 0.9 and 0.6 on ten records
    std::vector<double> y_x{1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    std::vector<double> y_y{0, 0, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<double> s_x{0.9, 0.3, 0.2, 0.1, 0.4, 0.5, 0.05, 0.0, 0.15, 0.25};
    std::vector<double> s_y{0.1, 0.2, 0.7, 0.05, 0.6, 0.3, 0.0, 0.02, 0.01, 0.03};
    LabelMatrix l;
    PredictionMatrix p;
    l.class_codes = p.class_codes = {"x", "y", "z"};
    l.values = Matrix(10, 3);
    p.scores = Matrix(10, 3);
    for (std::size_t i = 0; i < 10; ++i) {
        l.record_ids.push_back(std::to_string(i));
        l.values(i, 0) = y_x[i];
        l.values(i, 1) = y_y[i];
        p.scores(i, 0) = s_x[i];
        p.scores(i, 1) = s_y[i];
        p.scores(i, 2) = 0.5;
    }
    p.record_ids = l.record_ids;
    const double auc_x = *oracle::pair_auc(s_x, y_x), auc_y = *oracle::pair_auc(s_y, y_y);
    const auto report = decompose_auc(p, l, h, PropagationMode::sum_clip);
    REQUIRE(report.nodes.size() == 6);
    CHECK(report.nodes[0].code == "S");
    CHECK(report.nodes[1].code == "P");
    CHECK(report.nodes[2].code == "x");
    CHECK(*report.nodes[2].auc == auc_x);
    CHECK(*report.nodes[3].auc == auc_y);
    const auto parent = propagate_up(p, h, HierarchyLevel::sub, PropagationMode::sum_clip);
    const double auc_p = class_auc(parent.scores.column(0), std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
    CHECK(*report.nodes[1].auc == auc_p);
    CHECK(report.nodes[1].positives == 4);
    CHECK_FALSE(report.nodes[5].auc.has_value());  // z has no positives

    const auto tree = report.render_tree();
    CHECK(tree.find("    z [n/a(count=0)]\n") != std::string::npos);
    CHECK(tree.find("  P [") != std::string::npos);
    CHECK(tree.find("] (4)\n") != std::string::npos);
    const auto csv = report.render_csv();
    CHECK(csv.rfind("level,code,parent,auc,positives\n", 0) == 0);
    CHECK(csv.find("statement,z,Z,n/a,0\n") != std::string::npos);
}

TEST_CASE("ontology tree: OR image identity on synthetic records") {
    testing::TempDir dir;
    testing::SyntheticDatasetOptions opts;
    opts.num_records = 500;
    opts.write_signals = false;
    testing::write_synthetic_dataset(dir.path(), opts);
    const auto ds = load_dataset(dir.path());
    const auto h = Hierarchy::from_ontology(ds.ontology);
    const auto diag = build_task(ds.records, ds.ontology, make_task_spec(TaskName::diag, ds.ontology));
    const auto sub = build_task(ds.records, ds.ontology, make_task_spec(TaskName::sub_diag, ds.ontology));
    const auto sup = build_task(ds.records, ds.ontology, make_task_spec(TaskName::super_diag, ds.ontology));
    REQUIRE(diag.kept_record_ids == sup.kept_record_ids);
    CHECK(label_mismatches(derive_labels(diag.labels, h, HierarchyLevel::sub), sub.labels) == 0);
    CHECK(label_mismatches(derive_labels(diag.labels, h, HierarchyLevel::super), sup.labels) == 0);

    // report is a tree over the ontology: each statement exactly once, parent counts dominate
    PredictionMatrix p{diag.labels.record_ids, diag.labels.class_codes, Matrix(diag.labels.num_records(), diag.labels.num_classes(), 0.5)};
    const auto report = decompose_auc(p, diag.labels, h, PropagationMode::max);
    std::multiset<std::string> statements;
    std::map<std::string, std::size_t> count_of;
    for (const auto& n : report.nodes) {
        if (n.level == HierarchyLevel::statement) statements.insert(n.code);
        count_of[std::to_string(int(n.level)) + n.code] = n.positives;
    }
    CHECK(statements == std::multiset<std::string>(diag.labels.class_codes.begin(), diag.labels.class_codes.end()));
    for (const auto& n : report.nodes) {
        if (n.level == HierarchyLevel::super) continue;
        const auto parent_level = n.level == HierarchyLevel::statement ? HierarchyLevel::sub : HierarchyLevel::super;
        CHECK(count_of[std::to_string(int(parent_level)) + n.parent] >= n.positives);
    }
}
