#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

enum class HierarchyLevel { statement, sub, super };

// Three-level label tree: statement -> subclass -> superclass. Node names are
// scoped by level, so a subclass may share its code with a statement (NORM).
struct Hierarchy {
    std::map<std::string, std::string, std::less<>> statement_parent;
    std::map<std::string, std::string, std::less<>> sub_parent;

    static Hierarchy from_ontology(const Ontology& ontology);
    // Sorted children of a node one level down.
    std::vector<std::string> children(HierarchyLevel level, std::string_view code) const;
};

enum class PropagationMode { sum_clip, max, mean };
PropagationMode parse_propagation_mode(std::string_view name);
std::string to_string(PropagationMode mode);

// Scores over statement columns lifted to the sub or super level. The super
// level is reached in two steps (statement -> sub -> super), each applying
// `mode` to the direct children present in the matrix.
PredictionMatrix propagate_up(const PredictionMatrix& preds, const Hierarchy& hierarchy, HierarchyLevel target,
                              PropagationMode mode);

// Parent label = OR of child labels. Likelihoods, if present, take the max.
LabelMatrix derive_labels(const LabelMatrix& labels, const Hierarchy& hierarchy, HierarchyLevel target);

// Cells that differ between two label matrices over the same records and
// classes (matched by id and code, in any order).
std::size_t label_mismatches(const LabelMatrix& a, const LabelMatrix& b);

struct HierarchyNode {
    std::string code;
    HierarchyLevel level = HierarchyLevel::statement;
    std::string parent;             // empty for superclasses
    std::optional<double> auc;      // nullopt when the node has no positives or no negatives
    std::size_t positives = 0;
};

struct HierarchyReport {
    PropagationMode mode = PropagationMode::sum_clip;
    std::vector<HierarchyNode> nodes;  // pre-order: superclass, its subclasses, their statements

    // One node per line, two spaces of indent per level: "CODE [0.912] (123)".
    std::string render_tree() const;
    // level,code,parent,auc,positives
    std::string render_csv() const;
};

HierarchyReport decompose_auc(const PredictionMatrix& preds, const LabelMatrix& labels, const Hierarchy& hierarchy,
                              PropagationMode mode);

}  // namespace ecgbench
