#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "taotree/error.hpp"
#include "taotree/tree.hpp"

namespace taotree {

inline constexpr int kTreeFormatVersion = 1;

// Tree document:
//   {format_version, num_features, num_classes, num_nonzeros,
//    nodes: [{id, kind: "decision"|"leaf", parent, left, right,
//             label | bias + weights: [[feature, value], ...]}]}
// Written in BFS order with ids equal to node indices. Doubles use the
// shortest decimal form that round-trips, so values are preserved bit-exactly.
inline nlohmann::json tree_to_json(const Tree& tree) {
  using nlohmann::json;
  const Tree t = tree.compacted();
  json nodes = json::array();
  for (NodeIndex i : t.bfs_order()) {
    const Node& n = t.node(i);
    json j;
    j["id"] = i;
    j["kind"] = n.is_leaf() ? "leaf" : "decision";
    j["parent"] = n.parent ? json(*n.parent) : json(nullptr);
    j["left"] = n.left ? json(*n.left) : json(nullptr);
    j["right"] = n.right ? json(*n.right) : json(nullptr);
    if (n.is_leaf()) {
      j["label"] = n.label();
    } else {
      const auto& d = n.decision();
      j["bias"] = d.bias;
      json w = json::array();
      const auto idx = d.weights.indices();
      const auto val = d.weights.values();
      for (std::size_t k = 0; k < idx.size(); ++k) w.push_back(json::array({idx[k], val[k]}));
      j["weights"] = std::move(w);
    }
    nodes.push_back(std::move(j));
  }
  json doc;
  doc["format_version"] = kTreeFormatVersion;
  doc["num_features"] = t.num_features();
  doc["num_classes"] = t.num_classes();
  doc["num_nonzeros"] = count_nonzeros(t);
  doc["nodes"] = std::move(nodes);
  return doc;
}

inline std::string tree_to_string(const Tree& tree) { return tree_to_json(tree).dump(1) + "\n"; }

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw InputError(where + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

inline std::optional<long long> optional_id(const nlohmann::json& obj, const char* key,
                                            const std::string& where) {
  const auto& v = require(obj, key, where);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) throw InputError(where + ": field '" + key + "' must be an id");
  return v.get<long long>();
}

}  // namespace detail

// Accepts nodes in any order and with any distinct integer ids; the result is
// renumbered in BFS order.
inline Tree tree_from_json(const nlohmann::json& doc) {
  using detail::require;
  try {
    const int version = require(doc, "format_version", "tree").get<int>();
    if (version != kTreeFormatVersion) {
      throw InputError("unsupported tree format_version " + std::to_string(version));
    }
    const auto num_features = require(doc, "num_features", "tree").get<std::size_t>();
    const int num_classes = require(doc, "num_classes", "tree").get<int>();
    if (num_classes < 2) throw InputError("tree: num_classes must be >= 2");
    const auto& nodes = require(doc, "nodes", "tree");
    if (!nodes.is_array() || nodes.empty()) throw InputError("tree: 'nodes' must be a nonempty array");

    std::map<long long, const nlohmann::json*> by_id;
    std::optional<long long> root_id;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto& n = nodes[k];
      const std::string where = "tree node #" + std::to_string(k);
      const auto id = require(n, "id", where).get<long long>();
      if (!by_id.emplace(id, &n).second) throw InputError(where + ": duplicate id " + std::to_string(id));
      if (!detail::optional_id(n, "parent", where)) {
        if (root_id) throw InputError("tree: more than one root");
        root_id = id;
      }
    }
    if (!root_id) throw InputError("tree: no root node (parent = null)");

    auto params_of = [&](const nlohmann::json& n, long long id) -> NodeParams {
      const std::string where = "tree node id " + std::to_string(id);
      const auto kind = require(n, "kind", where).get<std::string>();
      if (kind == "leaf") return LeafParams{require(n, "label", where).get<Label>()};
      if (kind != "decision") throw InputError(where + ": unknown kind '" + kind + "'");
      std::vector<std::pair<FeatureIndex, double>> entries;
      for (const auto& e : require(n, "weights", where)) {
        if (!e.is_array() || e.size() != 2) throw InputError(where + ": weight entries are [index, value]");
        entries.emplace_back(e[0].get<FeatureIndex>(), e[1].get<double>());
      }
      return DecisionParams{SparseVector::from_pairs(num_features, std::move(entries)),
                            require(n, "bias", where).get<double>()};
    };

    Tree tree(num_features, num_classes);
    std::vector<std::pair<long long, NodeIndex>> stack;
    stack.emplace_back(*root_id, tree.set_root(params_of(*by_id.at(*root_id), *root_id)));
    std::set<long long> visited;
    while (!stack.empty()) {
      const auto [id, idx] = stack.back();
      stack.pop_back();
      if (!visited.insert(id).second) throw InputError("tree: node id " + std::to_string(id) + " reached twice");
      const auto& n = *by_id.at(id);
      const std::string where = "tree node id " + std::to_string(id);
      const auto left = detail::optional_id(n, "left", where);
      const auto right = detail::optional_id(n, "right", where);
      if (tree.node(idx).is_leaf()) {
        if (left || right) throw InputError(where + ": leaf with children");
        continue;
      }
      if (!left || !right) throw InputError(where + ": decision node needs two children");
      for (auto [cid, side] : {std::pair{*left, Side::kLeft}, std::pair{*right, Side::kRight}}) {
        auto it = by_id.find(cid);
        if (it == by_id.end()) throw InputError(where + ": child id " + std::to_string(cid) + " not found");
        if (detail::optional_id(*it->second, "parent", "tree node id " + std::to_string(cid)) != id) {
          throw InputError("tree node id " + std::to_string(cid) + ": parent link mismatch");
        }
        stack.emplace_back(cid, tree.add_child(idx, side, params_of(*it->second, cid)));
      }
    }
    if (visited.size() != by_id.size()) throw InputError("tree: nodes unreachable from root");
    Tree out = tree.compacted();
    out.validate();
    if (doc.contains("num_nonzeros") &&
        doc.at("num_nonzeros").get<std::size_t>() != count_nonzeros(out)) {
      throw InputError("tree: num_nonzeros does not match the stored weights");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("tree: ") + e.what());
  }
}

inline Tree tree_from_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("tree: ") + e.what(), e.byte);
  }
  return tree_from_json(doc);
}

inline void write_tree(const Tree& tree, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << tree_to_string(tree);
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline Tree read_tree(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open tree file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return tree_from_string(ss.str());
}

}  // namespace taotree
