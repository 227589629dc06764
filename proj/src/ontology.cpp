// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/ontology.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "sepforge/util.hpp"

namespace sepforge::ontology {
namespace {

using Kind = OntologyError::Kind;

void check_id(std::string_view id, std::size_t line) {
  const auto where = "line " + std::to_string(line);
  if (id.empty()) {
    throw OntologyError(Kind::kParse, "", where + ": empty id");
  }
  if (id == "-") {
    throw OntologyError(Kind::kParse, std::string(id),
                        where + ": '-' is reserved for 'no parent'");
  }
  if (id.find_first_of(",\t\n") != std::string_view::npos) {
    throw OntologyError(Kind::kParse, std::string(id),
                        where + ": id contains a comma, tab or newline");
  }
}

bool skip_line(const std::string& line) {
  const std::string t = util::trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::kMerge:
      return "merge";
    case RuleKind::kAggregate:
      return "aggregate";
    case RuleKind::kExclude:
      return "exclude";
  }
  return "?";
}

Ontology Ontology::from_nodes(std::vector<LabelNode> nodes) {
  Ontology ont;
  for (auto& n : nodes) {
    if (ont.nodes_.contains(n.id)) {
      throw OntologyError(Kind::kDuplicateId, n.id, "duplicate id '" + n.id + "'");
    }
    ont.order_.push_back(n.id);
    ont.nodes_.emplace(n.id, std::move(n));
  }
  for (const auto& id : ont.order_) {
    const auto& n = ont.nodes_.at(id);
    if (n.parent && !ont.nodes_.contains(*n.parent)) {
      throw OntologyError(Kind::kDanglingParent, id,
                          "node '" + id + "' references unknown parent '" +
                              *n.parent + "'");
    }
  }
  // Depth by walking up; a walk longer than the node count means a cycle.
  for (const auto& id : ont.order_) {
    int depth = 0;
    const LabelNode* cur = &ont.nodes_.at(id);
    while (cur->parent) {
      if (*cur->parent == id ||
          depth >= static_cast<int>(ont.order_.size())) {
        throw OntologyError(Kind::kCycle, id,
                            "cycle detected through node '" + id + "'");
      }
      cur = &ont.nodes_.at(*cur->parent);
      ++depth;
    }
    ont.nodes_.at(id).depth = depth;
  }
  ont.rebuild();
  return ont;
}

void Ontology::rebuild() {
  children_.clear();
  for (const auto& id : order_) {
    const auto& n = nodes_.at(id);
    if (n.parent) children_[*n.parent].push_back(id);
  }
  for (auto& [id, n] : nodes_) {
    n.is_leaf = !children_.contains(id);
  }
}

bool Ontology::contains(std::string_view id) const {
  return nodes_.find(id) != nodes_.end();
}

const LabelNode& Ontology::node(std::string_view id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw OntologyError(Kind::kUnknownId, std::string(id),
                        "unknown label id '" + std::string(id) + "'");
  }
  return it->second;
}

std::vector<std::string> Ontology::children(std::string_view id) const {
  auto it = children_.find(id);
  return it == children_.end() ? std::vector<std::string>{} : it->second;
}

bool Ontology::is_ancestor(std::string_view ancestor, std::string_view id) const {
  const LabelNode* cur = &node(id);
  while (cur->parent) {
    if (*cur->parent == ancestor) return true;
    cur = &node(*cur->parent);
  }
  return false;
}

std::optional<std::string> Ontology::resolve(std::string_view id) const {
  if (contains(id)) return std::string(id);
  auto it = aliases_.find(id);
  if (it == aliases_.end()) return std::nullopt;
  // Aliases always point at live ids; see apply_refinements.
  return it->second;
}

std::string Ontology::serialize() const {
  std::string out;
  for (const auto& id : order_) {
    const auto& n = nodes_.at(id);
    out += n.id;
    out += '\t';
    out += n.name;
    out += '\t';
    out += n.parent ? *n.parent : std::string("-");
    out += '\n';
  }
  return out;
}

std::string Ontology::serialize_aliases() const {
  std::string out;
  for (const auto& [from, to] : aliases_) {
    out += from;
    out += '\t';
    out += to;
    out += '\n';
  }
  return out;
}

bool Ontology::operator==(const Ontology& other) const {
  return order_ == other.order_ && nodes_ == other.nodes_ &&
         aliases_ == other.aliases_;
}

Ontology load_ontology(std::string_view document) {
  std::vector<LabelNode> nodes;
  std::size_t line_no = 0;
  for (const auto& line : util::lines(document)) {
    ++line_no;
    if (skip_line(line)) continue;
    const auto fields = util::split(line, '\t');
    if (fields.size() != 3) {
      throw OntologyError(Kind::kParse, "",
                          "line " + std::to_string(line_no) +
                              ": expected 3 tab-separated fields, got " +
                              std::to_string(fields.size()));
    }
    LabelNode n;
    n.id = util::trim(fields[0]);
    check_id(n.id, line_no);
    n.name = util::trim(fields[1]);
    const std::string parent = util::trim(fields[2]);
    if (parent.empty()) {
      throw OntologyError(Kind::kParse, n.id,
                          "line " + std::to_string(line_no) +
                              ": empty parent field (use '-' for roots)");
    }
    if (parent != "-") n.parent = parent;
    nodes.push_back(std::move(n));
  }
  return Ontology::from_nodes(std::move(nodes));
}

std::vector<RefinementRule> parse_plan(std::string_view document) {
  std::vector<RefinementRule> plan;
  std::size_t line_no = 0;
  for (const auto& line : util::lines(document)) {
    ++line_no;
    if (skip_line(line)) continue;
    const auto where = "plan line " + std::to_string(line_no);
    const auto fields = util::split(line, '\t');
    if (fields.size() != 3) {
      throw OntologyError(Kind::kParse, "",
                          where + ": expected 3 tab-separated fields");
    }
    RefinementRule rule;
    const std::string kind = util::to_lower(util::trim(fields[0]));
    if (kind == "merge") {
      rule.kind = RuleKind::kMerge;
    } else if (kind == "aggregate") {
      rule.kind = RuleKind::kAggregate;
    } else if (kind == "exclude") {
      rule.kind = RuleKind::kExclude;
    } else {
      throw OntologyError(Kind::kParse, "", where + ": unknown rule kind '" +
                                                kind + "'");
    }
    const std::string target = util::trim(fields[1]);
    if (!target.empty() && target != "-") rule.target = target;
    for (const auto& s : util::split(fields[2], ',')) {
      std::string id = util::trim(s);
      if (!id.empty()) rule.sources.push_back(std::move(id));
    }
    plan.push_back(std::move(rule));
  }
  return plan;
}

std::string serialize_plan(const std::vector<RefinementRule>& plan) {
  std::string out;
  for (const auto& rule : plan) {
    out += to_string(rule.kind);
    out += '\t';
    out += rule.target ? *rule.target : std::string("-");
    out += '\t';
    for (std::size_t i = 0; i < rule.sources.size(); ++i) {
      if (i) out += ',';
      out += rule.sources[i];
    }
    out += '\n';
  }
  return out;
}

Ontology apply_refinements(const Ontology& ont,
                           const std::vector<RefinementRule>& plan) {
  Ontology cur = ont;
  // Ids removed by exclude, with the rule that removed them; referencing one
  // later is an error rather than a silent no-op.
  std::map<std::string, std::size_t, std::less<>> excluded;

  for (std::size_t r = 0; r < plan.size(); ++r) {
    const RefinementRule& rule = plan[r];
    const std::string where = "rule " + std::to_string(r + 1) + " (" +
                              std::string(to_string(rule.kind)) + ")";
    const auto require_live = [&](const std::string& id) {
      if (cur.contains(id)) return;
      if (auto it = excluded.find(id); it != excluded.end()) {
        throw OntologyError(Kind::kUnknownId, id,
                            where + ": '" + id + "' was excluded by rule " +
                                std::to_string(it->second));
      }
      if (auto it = cur.aliases_.find(id); it != cur.aliases_.end()) {
        throw OntologyError(Kind::kUnknownId, id,
                            where + ": '" + id + "' was already retired into '" +
                                it->second + "'");
      }
      throw OntologyError(Kind::kUnknownId, id,
                          where + ": unknown label id '" + id + "'");
    };

    if (rule.sources.empty()) {
      throw OntologyError(Kind::kInvalidRule, "", where + ": no sources");
    }
    if (rule.kind == RuleKind::kExclude && rule.target) {
      throw OntologyError(Kind::kInvalidRule, *rule.target,
                          where + ": exclude takes no target");
    }
    if (rule.kind != RuleKind::kExclude && !rule.target) {
      throw OntologyError(Kind::kInvalidRule, "", where + ": target required");
    }
    for (const auto& s : rule.sources) {
      if (rule.target && s == *rule.target) {
        throw OntologyError(Kind::kInvalidRule, s,
                            where + ": '" + s + "' is both source and target");
      }
      require_live(s);
    }
    if (rule.target) require_live(*rule.target);

    if (rule.kind == RuleKind::kExclude) {
      std::set<std::string> doomed;
      std::vector<std::string> stack(rule.sources.begin(), rule.sources.end());
      while (!stack.empty()) {
        std::string id = std::move(stack.back());
        stack.pop_back();
        if (!doomed.insert(id).second) continue;
        for (auto& c : cur.children(id)) stack.push_back(std::move(c));
      }
      for (const auto& id : doomed) {
        cur.nodes_.erase(id);
        excluded.emplace(id, r + 1);
      }
      std::erase_if(cur.order_,
                    [&](const std::string& id) { return doomed.contains(id); });
      std::erase_if(cur.aliases_, [&](const auto& kv) {
        return doomed.contains(kv.second);
      });
    } else {
      const std::string& target = *rule.target;
      for (const auto& s : rule.sources) {
        if (!cur.node(s).is_leaf) {
          throw OntologyError(Kind::kWouldOrphan, s,
                              where + ": '" + s +
                                  "' has children that would be orphaned");
        }
        if (rule.kind == RuleKind::kAggregate && !cur.is_ancestor(target, s)) {
          throw OntologyError(Kind::kNotAncestor, s,
                              where + ": '" + target +
                                  "' is not an ancestor of '" + s + "'");
        }
      }
      std::set<std::string> retired(rule.sources.begin(), rule.sources.end());
      for (const auto& s : retired) {
        cur.nodes_.erase(s);
        cur.aliases_[s] = target;
      }
      // Keep aliases one hop deep so resolve() is a single lookup.
      for (auto& [from, to] : cur.aliases_) {
        if (retired.contains(to)) to = target;
      }
      std::erase_if(cur.order_,
                    [&](const std::string& id) { return retired.contains(id); });
    }
    cur.rebuild();
  }
  return cur;
}

std::vector<std::string> leaf_labels(const Ontology& ont) {
  std::vector<std::string> out;
  for (const auto& id : ont.ids()) {
    if (ont.node(id).is_leaf) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> candidate_leaves(const Ontology& ont,
                                          std::string_view coarse_id) {
  const LabelNode& root = ont.node(coarse_id);
  std::vector<std::string> out;
  std::vector<std::string> stack{root.id};
  while (!stack.empty()) {
    std::string id = std::move(stack.back());
    stack.pop_back();
    if (ont.node(id).is_leaf) {
      out.push_back(std::move(id));
      continue;
    }
    const auto kids = ont.children(id);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

}  // namespace sepforge::ontology
