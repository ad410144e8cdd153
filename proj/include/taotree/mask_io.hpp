#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "taotree/error.hpp"
#include "taotree/masks.hpp"

namespace taotree {

inline constexpr int kMaskFormatVersion = 1;

// Run-length encoding of the ternary multiplier: space-separated runs, each a
// symbol from {0,1,*} followed by its decimal length (omitted when 1).
// Example: "*3 1 02" is (*,*,*,1,0,0).
inline std::string encode_ternary(const std::vector<Ternary>& mult) {
  std::string out;
  std::size_t j = 0;
  while (j < mult.size()) {
    std::size_t run = 1;
    while (j + run < mult.size() && mult[j + run] == mult[j]) ++run;
    if (!out.empty()) out += ' ';
    out += to_char(mult[j]);
    if (run > 1) out += std::to_string(run);
    j += run;
  }
  return out;
}

inline std::vector<Ternary> decode_ternary(const std::string& text, std::size_t expected) {
  std::vector<Ternary> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == ' ') {
      ++pos;
      continue;
    }
    Ternary t;
    switch (text[pos]) {
      case '0': t = Ternary::kZero; break;
      case '1': t = Ternary::kOne; break;
      case '*': t = Ternary::kWild; break;
      default: throw ParseError(std::string("mask: invalid ternary symbol '") + text[pos] + "'", pos);
    }
    const std::size_t start = ++pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t run = 1;
    if (pos > start) {
      run = std::stoull(text.substr(start, pos - start));
      if (run == 0 || run > expected) throw ParseError("mask: invalid run length", start);
    }
    if (out.size() + run > expected) throw ParseError("mask: runs exceed the declared length", start);
    out.insert(out.end(), run, t);
  }
  if (out.size() != expected) {
    throw InputError("mask: runs cover " + std::to_string(out.size()) + " features, expected " +
                     std::to_string(expected));
  }
  return out;
}

namespace detail {

inline nlohmann::json sparse_pairs(const std::vector<double>& v, double skip) {
  auto arr = nlohmann::json::array();
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (v[j] != skip) arr.push_back(nlohmann::json::array({j, v[j]}));
  }
  return arr;
}

inline std::vector<double> dense_from_pairs(const nlohmann::json& arr, std::size_t n, double fill,
                                            const char* what) {
  std::vector<double> v(n, fill);
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2) throw InputError(std::string("mask: ") + what + " entries are [index, value]");
    const auto j = e[0].get<std::size_t>();
    if (j >= n) throw InputError(std::string("mask: ") + what + " index out of range");
    v[j] = e[1].get<double>();
  }
  return v;
}

inline RecipeKind recipe_from_string(const std::string& s) {
  for (auto k : {RecipeKind::kAllToClass, RecipeKind::kNoneToClass, RecipeKind::kClassToClass,
                 RecipeKind::kExcludeSubtree, RecipeKind::kFeaturesSelected, RecipeKind::kNone}) {
    if (s == to_string(k)) return k;
  }
  throw InputError("mask: unknown recipe '" + s + "'");
}

inline Side side_from_string(const std::string& s) {
  if (s == "left") return Side::kLeft;
  if (s == "right") return Side::kRight;
  throw InputError("expected 'left' or 'right', got '" + s + "'");
}

}  // namespace detail

// Mask document: {format_version, F, mult, add, provenance, recipe,
// diagnostics, concrete?}. `concrete` carries a randomized real-valued
// realization as sparse overrides: multipliers that differ from the ternary
// default and the full additive vector.
inline nlohmann::json mask_to_json(const Mask& m, const ConcreteMask* concrete = nullptr) {
  using nlohmann::json;
  json doc;
  doc["format_version"] = kMaskFormatVersion;
  doc["F"] = m.size();
  doc["mult"] = encode_ternary(m.mult);
  doc["add"] = detail::sparse_pairs(m.add, 0.0);
  json prov = json::array();
  for (const auto& p : m.provenance) prov.push_back({{"node", p.node}, {"child", to_string(p.child)}});
  doc["provenance"] = std::move(prov);
  json recipe;
  recipe["kind"] = to_string(m.recipe.kind);
  recipe["target"] = m.recipe.target;
  recipe["source"] = m.recipe.source;
  recipe["source_leaf"] = m.recipe.source_leaf ? json(*m.recipe.source_leaf) : json(nullptr);
  json cuts = json::array();
  for (const auto& c : m.recipe.cuts) cuts.push_back({{"node", c.node}, {"child", to_string(c.child)}});
  recipe["cuts"] = std::move(cuts);
  doc["recipe"] = std::move(recipe);
  json diag;
  diag["conflicts"] = m.diagnostics.conflicts;
  diag["notes"] = m.diagnostics.notes;
  diag["chosen_leaf"] = m.diagnostics.chosen_leaf ? json(*m.diagnostics.chosen_leaf) : json(nullptr);
  diag["masked_features"] = m.count(Ternary::kZero) + m.count(Ternary::kOne);
  doc["diagnostics"] = std::move(diag);
  if (concrete) {
    const auto base = to_concrete(m);
    json mult = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (concrete->mult[j] != base.mult[j]) mult.push_back(json::array({j, concrete->mult[j]}));
    }
    doc["concrete"] = {{"mult", std::move(mult)}, {"add", detail::sparse_pairs(concrete->add, 0.0)}};
  }
  return doc;
}

struct MaskFile {
  Mask mask;
  std::optional<ConcreteMask> concrete;
};

inline MaskFile mask_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kMaskFormatVersion) throw InputError("mask: unsupported format_version");
    const auto F = doc.at("F").get<std::size_t>();
    MaskFile out;
    Mask& m = out.mask;
    m.mult = decode_ternary(doc.at("mult").get<std::string>(), F);
    m.add = detail::dense_from_pairs(doc.at("add"), F, 0.0, "add");
    for (const auto& p : doc.at("provenance")) {
      m.provenance.push_back({p.at("node").get<NodeIndex>(), detail::side_from_string(p.at("child").get<std::string>())});
    }
    if (doc.contains("recipe")) {
      const auto& r = doc.at("recipe");
      m.recipe.kind = detail::recipe_from_string(r.at("kind").get<std::string>());
      m.recipe.target = r.at("target").get<Label>();
      m.recipe.source = r.at("source").get<Label>();
      if (!r.at("source_leaf").is_null()) m.recipe.source_leaf = r.at("source_leaf").get<NodeIndex>();
      for (const auto& c : r.at("cuts")) {
        m.recipe.cuts.push_back({c.at("node").get<NodeIndex>(), detail::side_from_string(c.at("child").get<std::string>())});
      }
    }
    if (doc.contains("diagnostics")) {
      const auto& d = doc.at("diagnostics");
      m.diagnostics.conflicts = d.at("conflicts").get<std::vector<FeatureIndex>>();
      m.diagnostics.notes = d.at("notes").get<std::vector<std::string>>();
      if (!d.at("chosen_leaf").is_null()) m.diagnostics.chosen_leaf = d.at("chosen_leaf").get<NodeIndex>();
    }
    m.validate();
    if (doc.contains("concrete")) {
      ConcreteMask c = to_concrete(m);
      for (const auto& e : doc.at("concrete").at("mult")) {
        const auto j = e.at(0).get<std::size_t>();
        if (j >= F) throw InputError("mask: concrete index out of range");
        c.mult[j] = e.at(1).get<double>();
      }
      c.add = detail::dense_from_pairs(doc.at("concrete").at("add"), F, 0.0, "concrete add");
      out.concrete = std::move(c);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("mask: ") + e.what());
  }
}

inline std::string mask_to_string(const Mask& m, const ConcreteMask* concrete = nullptr) {
  return mask_to_json(m, concrete).dump(1) + "\n";
}

inline MaskFile mask_from_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("mask: ") + e.what(), e.byte);
  }
  return mask_from_json(doc);
}

inline void write_mask(const std::string& path, const Mask& m, const ConcreteMask* concrete = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << mask_to_string(m, concrete);
}

inline MaskFile read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open mask file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return mask_from_string(ss.str());
}

}  // namespace taotree
