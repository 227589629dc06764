// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Hierarchical label taxonomy with merge / aggregate / exclude refinement.
//
// Taxonomy document: one node per line, `id<TAB>name<TAB>parent_id_or_dash`.
// Refinement plan:   one rule per line, `kind<TAB>target_or_dash<TAB>s1,s2,...`.
// Blank lines and lines starting with '#' are ignored in both.

#ifndef SEPFORGE_ONTOLOGY_HPP_
#define SEPFORGE_ONTOLOGY_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sepforge::ontology {

struct LabelNode {
  std::string id;
  std::string name;
  std::optional<std::string> parent;
  int depth = 0;
  bool is_leaf = true;

  bool operator==(const LabelNode&) const = default;
};

enum class RuleKind { kMerge, kAggregate, kExclude };

struct RefinementRule {
  RuleKind kind = RuleKind::kMerge;
  std::vector<std::string> sources;
  std::optional<std::string> target;
};

class OntologyError : public std::runtime_error {
 public:
  enum class Kind {
    kParse,
    kDuplicateId,
    kDanglingParent,
    kCycle,
    kUnknownId,
    kNotAncestor,
    kWouldOrphan,
    kInvalidRule,
  };
  OntologyError(Kind kind, std::string offending_id, const std::string& what)
      : std::runtime_error(what), kind_(kind), id_(std::move(offending_id)) {}

  Kind kind() const { return kind_; }
  const std::string& offending_id() const { return id_; }

 private:
  Kind kind_;
  std::string id_;
};

// Immutable forest of labels. Refinement returns a new Ontology.
class Ontology {
 public:
  // Builds from nodes in document order; only id/name/parent are read.
  // Depth and leaf flags are derived. Throws OntologyError.
  static Ontology from_nodes(std::vector<LabelNode> nodes);

  bool contains(std::string_view id) const;
  // Throws OntologyError(kUnknownId).
  const LabelNode& node(std::string_view id) const;
  std::size_t size() const { return order_.size(); }
  // Ids in document order.
  const std::vector<std::string>& ids() const { return order_; }
  std::vector<std::string> children(std::string_view id) const;
  bool is_ancestor(std::string_view ancestor, std::string_view id) const;

  // Retired id -> surviving id.
  const std::map<std::string, std::string, std::less<>>& alias_map() const {
    return aliases_;
  }
  // Follows aliases to a live id; a live id resolves to itself. Returns
  // nullopt for ids that are neither live nor aliased.
  std::optional<std::string> resolve(std::string_view id) const;

  // Taxonomy document for the live nodes, in document order.
  std::string serialize() const;
  // `retired<TAB>survivor` lines, sorted by retired id.
  std::string serialize_aliases() const;

  bool operator==(const Ontology& other) const;

 private:
  friend Ontology apply_refinements(const Ontology&,
                                    const std::vector<RefinementRule>&);
  void rebuild();

  std::map<std::string, LabelNode, std::less<>> nodes_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>, std::less<>> children_;
  std::map<std::string, std::string, std::less<>> aliases_;
};

Ontology load_ontology(std::string_view document);
std::vector<RefinementRule> parse_plan(std::string_view document);
std::string serialize_plan(const std::vector<RefinementRule>& plan);

// Applies rules in order. Throws OntologyError naming the offending id and
// the rule's 1-based position.
Ontology apply_refinements(const Ontology& ont,
                           const std::vector<RefinementRule>& plan);

// Leaf ids in lexicographic order.
std::vector<std::string> leaf_labels(const Ontology& ont);

// Leaves in the subtree rooted at coarse_id, in document (pre-)order;
// [coarse_id] when it is itself a leaf. The order is the index order offered
// to the leaf-refinement prompt. Throws OntologyError(kUnknownId).
std::vector<std::string> candidate_leaves(const Ontology& ont,
                                          std::string_view coarse_id);

std::string_view to_string(RuleKind kind);

}  // namespace sepforge::ontology

#endif  // SEPFORGE_ONTOLOGY_HPP_
