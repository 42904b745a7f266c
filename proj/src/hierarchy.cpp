#include "ecgbench/hierarchy.hpp"

#include <algorithm>
#include <cstdio>

#include "ecgbench/error.hpp"
#include "ecgbench/metrics.hpp"
#include "ecgbench/text_io.hpp"

namespace ecgbench {

namespace {

using ParentMap = std::map<std::string, std::string, std::less<>>;

struct Grouping {
    std::vector<std::string> parents;              // sorted
    std::vector<std::vector<std::size_t>> members;  // child column indices per parent
};

Grouping group_columns(const std::vector<std::string>& codes, const ParentMap& parent_of, const char* level) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t c = 0; c < codes.size(); ++c) {
        const auto it = parent_of.find(codes[c]);
        if (it == parent_of.end()) throw DataError(std::string("class ") + codes[c] + " has no " + level + " parent");
        groups[it->second].push_back(c);
    }
    Grouping g;
    for (auto& [p, m] : groups) {
        g.parents.push_back(p);
        g.members.push_back(std::move(m));
    }
    return g;
}

PredictionMatrix lift(const PredictionMatrix& preds, const ParentMap& parent_of, PropagationMode mode,
                      const char* level) {
    const auto g = group_columns(preds.class_codes, parent_of, level);
    PredictionMatrix out;
    out.record_ids = preds.record_ids;
    out.class_codes = g.parents;
    out.scores = Matrix(preds.num_records(), g.parents.size());
    for (std::size_t i = 0; i < preds.num_records(); ++i) {
        for (std::size_t p = 0; p < g.parents.size(); ++p) {
            double acc = mode == PropagationMode::max ? preds.scores(i, g.members[p][0]) : 0.0;
            for (auto c : g.members[p]) {
                const double s = preds.scores(i, c);
                if (mode == PropagationMode::max) acc = std::max(acc, s);
                else acc += s;
            }
            if (mode == PropagationMode::sum_clip) acc = std::min(1.0, acc);
            if (mode == PropagationMode::mean) acc /= static_cast<double>(g.members[p].size());
            out.scores(i, p) = acc;
        }
    }
    return out;
}

LabelMatrix lift_labels(const LabelMatrix& labels, const ParentMap& parent_of, const char* level) {
    const auto g = group_columns(labels.class_codes, parent_of, level);
    LabelMatrix out;
    out.record_ids = labels.record_ids;
    out.class_codes = g.parents;
    out.values = Matrix(labels.num_records(), g.parents.size());
    if (labels.has_likelihoods()) out.likelihoods = Matrix(labels.num_records(), g.parents.size());
    for (std::size_t i = 0; i < labels.num_records(); ++i) {
        for (std::size_t p = 0; p < g.parents.size(); ++p) {
            for (auto c : g.members[p]) {
                if (labels.values(i, c) != 1.0) continue;
                out.values(i, p) = 1.0;
                if (labels.has_likelihoods()) out.likelihoods(i, p) = std::max(out.likelihoods(i, p), labels.likelihoods(i, c));
            }
        }
    }
    return out;
}

std::optional<double> maybe_auc(const PredictionMatrix& preds, const LabelMatrix& labels, std::size_t c,
                                 std::size_t& positives) {
    const auto y = labels.values.column(c);
    positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1.0));
    if (positives == 0 || positives == y.size()) return std::nullopt;
    return class_auc(preds.scores.column(c), y);
}

const char* level_name(HierarchyLevel l) {
    switch (l) {
        case HierarchyLevel::statement: return "statement";
        case HierarchyLevel::sub: return "sub";
        case HierarchyLevel::super: return "super";
    }
    return "?";
}

}  // namespace

Hierarchy Hierarchy::from_ontology(const Ontology& ontology) {
    Hierarchy h;
    for (const auto& s : ontology.statements()) {
        if (!s.is_diagnostic) continue;
        h.statement_parent[s.code] = *s.diagnostic_subclass;
        h.sub_parent[*s.diagnostic_subclass] = *s.diagnostic_superclass;
    }
    return h;
}

std::vector<std::string> Hierarchy::children(HierarchyLevel level, std::string_view code) const {
    const auto& map = level == HierarchyLevel::super ? sub_parent : statement_parent;
    std::vector<std::string> out;
    if (level == HierarchyLevel::statement) return out;
    for (const auto& [child, parent] : map) {
        if (parent == code) out.push_back(child);
    }
    return out;
}

PropagationMode parse_propagation_mode(std::string_view name) {
    if (name == "sum_clip" || name == "sum") return PropagationMode::sum_clip;
    if (name == "max") return PropagationMode::max;
    if (name == "mean") return PropagationMode::mean;
    throw ArgumentError("unknown propagation mode: " + std::string(name));
}

std::string to_string(PropagationMode mode) {
    switch (mode) {
        case PropagationMode::sum_clip: return "sum_clip";
        case PropagationMode::max: return "max";
        case PropagationMode::mean: return "mean";
    }
    return "?";
}

PredictionMatrix propagate_up(const PredictionMatrix& preds, const Hierarchy& hierarchy, HierarchyLevel target,
                              PropagationMode mode) {
    if (target == HierarchyLevel::statement) return preds;
    auto sub = lift(preds, hierarchy.statement_parent, mode, "subclass");
    if (target == HierarchyLevel::sub) return sub;
    return lift(sub, hierarchy.sub_parent, mode, "superclass");
}

LabelMatrix derive_labels(const LabelMatrix& labels, const Hierarchy& hierarchy, HierarchyLevel target) {
    if (target == HierarchyLevel::statement) return labels;
    auto sub = lift_labels(labels, hierarchy.statement_parent, "subclass");
    if (target == HierarchyLevel::sub) return sub;
    return lift_labels(sub, hierarchy.sub_parent, "superclass");
}

std::size_t label_mismatches(const LabelMatrix& a, const LabelMatrix& b) {
    if (a.num_records() != b.num_records() || a.num_classes() != b.num_classes()) {
        throw DataError("label matrices differ in shape");
    }
    PredictionMatrix as_pred{b.record_ids, b.class_codes, b.values};
    const auto aligned = align_to(as_pred, a.record_ids, a.class_codes);
    std::size_t diff = 0;
    for (std::size_t k = 0; k < a.values.data().size(); ++k) diff += a.values.data()[k] != aligned.scores.data()[k];
    return diff;
}

HierarchyReport decompose_auc(const PredictionMatrix& preds, const LabelMatrix& labels, const Hierarchy& hierarchy,
                              PropagationMode mode) {
    require_aligned(preds, labels);
    const auto sub_p = propagate_up(preds, hierarchy, HierarchyLevel::sub, mode);
    const auto sub_l = derive_labels(labels, hierarchy, HierarchyLevel::sub);
    const auto sup_p = lift(sub_p, hierarchy.sub_parent, mode, "superclass");
    const auto sup_l = lift_labels(sub_l, hierarchy.sub_parent, "superclass");

    HierarchyReport report;
    report.mode = mode;
    const auto add = [&](const PredictionMatrix& p, const LabelMatrix& l, std::size_t c, HierarchyLevel level,
                         std::string parent) {
        HierarchyNode node;
        node.code = l.class_codes[c];
        node.level = level;
        node.parent = std::move(parent);
        node.auc = maybe_auc(p, l, c, node.positives);
        report.nodes.push_back(std::move(node));
    };
    for (std::size_t s = 0; s < sup_l.num_classes(); ++s) {
        const auto& sup = sup_l.class_codes[s];
        add(sup_p, sup_l, s, HierarchyLevel::super, "");
        for (std::size_t b = 0; b < sub_l.num_classes(); ++b) {
            if (hierarchy.sub_parent.at(sub_l.class_codes[b]) != sup) continue;
            add(sub_p, sub_l, b, HierarchyLevel::sub, sup);
            for (std::size_t c = 0; c < labels.num_classes(); ++c) {
                if (hierarchy.statement_parent.at(labels.class_codes[c]) != sub_l.class_codes[b]) continue;
                add(preds, labels, c, HierarchyLevel::statement, sub_l.class_codes[b]);
            }
        }
    }
    return report;
}

std::string HierarchyReport::render_tree() const {
    std::string out;
    for (const auto& n : nodes) {
        const int depth = n.level == HierarchyLevel::super ? 0 : n.level == HierarchyLevel::sub ? 1 : 2;
        out.append(static_cast<std::size_t>(2 * depth), ' ');
        out += n.code;
        if (n.auc) {
            char buf[48];
            std::snprintf(buf, sizeof buf, " [%.3f] (%zu)", *n.auc, n.positives);
            out += buf;
        } else {
            out += " [n/a(count=" + std::to_string(n.positives) + ")]";
        }
        out += '\n';
    }
    return out;
}

std::string HierarchyReport::render_csv() const {
    std::string out = "level,code,parent,auc,positives\n";
    for (const auto& n : nodes) {
        out += std::string(level_name(n.level)) + ',' + csv_escape(n.code) + ',' + csv_escape(n.parent) + ',' +
               (n.auc ? format_double(*n.auc) : std::string("n/a")) + ',' + std::to_string(n.positives) + '\n';
    }
    return out;
}

}  // namespace ecgbench
