#include <gtest/gtest.h>

#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"

using namespace taotree;

namespace {

// Recursive-descent checker for the subset of the DOT language the exporter
// emits: `digraph ID { stmt* }` where a statement is a node or edge statement
// with an optional attribute list, or `node [...]`. Collects node ids and
// edges so the structure can be compared with the tree.
class DotChecker {
 public:
  explicit DotChecker(std::string text) : s_(std::move(text)) {}

  bool parse() {
    try {
      keyword("digraph");
      id();
      expect('{');
      while (peek() != '}') statement();
      expect('}');
      ws();
      return pos_ == s_.size();
    } catch (const std::string& e) {
      error = e + " at " + std::to_string(pos_);
      return false;
    }
  }

  std::set<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, std::map<std::string, std::string>> attrs;
  std::string error;

 private:
  void ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  char peek() {
    ws();
    if (pos_ >= s_.size()) throw std::string("unexpected end");
    return s_[pos_];
  }
  void expect(char c) {
    if (peek() != c) throw std::string("expected '") + c + "'";
    ++pos_;
  }
  void keyword(const std::string& k) {
    ws();
    if (s_.compare(pos_, k.size(), k) != 0) throw std::string("expected ") + k;
    pos_ += k.size();
  }
  std::string id() {
    ws();
    if (peek() == '"') return quoted();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (pos_ == start) throw std::string("expected identifier");
    return s_.substr(start, pos_ - start);
  }
  std::string quoted() {
    expect('"');
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') {
        if (++pos_ >= s_.size()) throw std::string("dangling escape");
      }
      out += s_[pos_++];
    }
    if (pos_ >= s_.size()) throw std::string("unterminated string");
    ++pos_;
    return out;
  }
  std::map<std::string, std::string> attr_list() {
    std::map<std::string, std::string> out;
    expect('[');
    while (peek() != ']') {
      const std::string k = id();
      expect('=');
      out[k] = id();
      if (peek() == ',') ++pos_;
    }
    expect(']');
    return out;
  }
  void statement() {
    const std::string a = id();
    if (a == "node" && peek() == '[') {
      attr_list();
    } else if (peek() == '-') {
      keyword("->");
      const std::string b = id();
      edges.emplace_back(a, b);
      if (peek() == '[') attrs[a + "->" + b] = attr_list();
    } else {
      nodes.insert(a);
      if (peek() == '[') attrs[a] = attr_list();
    }
    expect(';');
  }

  std::string s_;
  std::size_t pos_ = 0;
};

Tree sample_tree() {
  Tree t(5, 3);
  const auto r = t.set_root(
      DecisionParams{SparseVector::from_dense(std::vector<double>{0.5, 0, -3, 0.25, 1}), -0.125});
  t.add_child(r, Side::kLeft, LeafParams{2});
  const auto c = t.add_child(r, Side::kRight, DecisionParams{SparseVector::from_dense(std::vector<double>{0, 2, 0, 0, 0}), 0.0});
  t.add_child(c, Side::kLeft, LeafParams{0});
  t.add_child(c, Side::kRight, LeafParams{1});
  return t;
}

}  // namespace

TEST(DotChecker, RejectsBrokenDocuments) {
  EXPECT_FALSE(DotChecker("digraph t { n0 -> ; }").parse());
  EXPECT_FALSE(DotChecker("digraph t { n0 [label=\"x] ; }").parse());
  EXPECT_FALSE(DotChecker("digraph t { n0 }").parse());
  EXPECT_FALSE(DotChecker("graph t { }").parse());
  EXPECT_TRUE(DotChecker("digraph t { n0 [label=\"a\\nb\"]; n0 -> n1; }").parse());
}

TEST(Dot, ParsesAndMatchesTheTree) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tree t = fixtures::random_tree(6, 4, 1 + static_cast<int>(seed % 4), seed);
    DotChecker dot(to_dot(t));
    ASSERT_TRUE(dot.parse()) << dot.error << "\n" << to_dot(t);
    EXPECT_EQ(dot.nodes.size(), t.size());
    std::set<std::pair<std::string, std::string>> want;
    for (NodeIndex i = 0; i < t.size(); ++i) {
      const Node& n = t.node(i);
      const std::string id = "n" + std::to_string(i);
      EXPECT_TRUE(dot.nodes.count(id));
      EXPECT_EQ(dot.attrs[id]["shape"], n.is_leaf() ? "ellipse" : "box");
      if (n.is_leaf()) {
        EXPECT_EQ(dot.attrs[id]["label"], "class " + std::to_string(n.label()));
      } else {
        want.insert({id, "n" + std::to_string(*n.left)});
        want.insert({id, "n" + std::to_string(*n.right)});
        EXPECT_EQ(dot.attrs[id + "->n" + std::to_string(*n.left)]["label"], "<0");
        EXPECT_EQ(dot.attrs[id + "->n" + std::to_string(*n.right)]["label"], ">=0");
      }
    }
    EXPECT_EQ(std::set(dot.edges.begin(), dot.edges.end()), want);
    EXPECT_EQ(dot.edges.size(), t.size() - 1);
  }
}

TEST(Dot, DecisionLabelShowsTopWeightsAndBias) {
  DotChecker dot(to_dot(sample_tree(), 2));
  ASSERT_TRUE(dot.parse()) << dot.error;
  // escapes are consumed by the checker, leaving "n" separators
  EXPECT_EQ(dot.attrs["n0"]["label"], "node 0n4 weightsnx2: -3nx4: 1nb: -0.125");
}

TEST(Dump, ListsEveryNodeWithCounts) {
  const Tree t = sample_tree();
  const Dataset d(4, 5, {1, 0, 0, 0, 0,  0, 0, 1, 0, 0,  0, 1, 0, 0, 1,  0, 0, 0, 0, 1}, {2, 2, 1, 0}, 3);
  const std::string out = dump_tree(t, &d, 2);
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "tree: 5 nodes, 3 leaves, depth 2, 5 nonzero weights, 5 of 5 features used");
  std::getline(lines, line);
  EXPECT_EQ(line, "node 0 depth 0 decision bias -0.125 nonzeros 4 left 1 right 2 top [2:-3, 4:1]");
  std::getline(lines, line);
  // (0,0,1,0,0) has w.z + b < 0 and is the only one routed left
  EXPECT_EQ(line, "  node 1 depth 1 leaf label 2 train_count 1");
  std::getline(lines, line);
  EXPECT_EQ(line, "  node 2 depth 1 decision bias 0 nonzeros 1 left 3 right 4 top [1:2]");
  std::getline(lines, line);
  // node 2 sends w.z = 0 right, so everything else ends at node 4
  EXPECT_EQ(line, "    node 3 depth 2 leaf label 0 train_count 0");
  std::getline(lines, line);
  EXPECT_EQ(line, "    node 4 depth 2 leaf label 1 train_count 3");
  EXPECT_FALSE(std::getline(lines, line));
  EXPECT_EQ(dump_tree(t).find("train_count"), std::string::npos);
}
