#include <doctest.h>

#include <random>

#include "plantrec/lstring.hpp"
#include "plantrec/procgen.hpp"

using namespace plantrec;

namespace {

const char* kSeedling =
    "S(0.002,0.01,0,137.5)C(45,0.008,0.3)C(45,0.008,0.3)"
    "S(0.0015,0.005,5,137.5)P(0.001,0.0005,50,0.012,0.3)L(0.2,0.013,0.01)";

std::vector<LString> corpus(std::size_t n) {
  std::vector<LString> out;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> age(kMinAgeDays, kMaxAgeDays);
  for (std::size_t i = 0; i < n; ++i) {
    GrowthConfig g;
    g.structure_seed = i % 33;
    g.param_seed = 1000 + i;
    g.age_days = age(rng);
    out.push_back(grow(g));
  }
  return out;
}

std::size_t count_brackets(const LString& l) {
  std::size_t n = 0;
  for (const auto& it : l.items) n += std::holds_alternative<OpenBracket>(it) ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("parse modules") {
  const LString l = parse_lstring("S(0.002,0.01,5,137.5)C(45,0.008,0.3)C(45,0.008,0.3)");
  REQUIRE(l.items.size() == 3);
  CHECK(std::get<OrganModule>(l.items[0]).kind == ModuleKind::Stem);
  CHECK(std::get<OrganModule>(l.items[1]).kind == ModuleKind::Cotyledon);
  CHECK(std::get<OrganModule>(l.items[2]).kind == ModuleKind::Cotyledon);
  CHECK(serialize(l) == "S(0.002,0.01,5,137.5)C(45,0.008,0.3)C(45,0.008,0.3)");
  CHECK(serialize(l) == serialize(l));
  CHECK(serialize(l).find(' ') == std::string::npos);
}

TEST_CASE("parse errors") {
  try {
    parse_lstring("S(0.002,0.01,5,137.5)[P(0.001,0.0005,50,0.012,0.3)L(0.2,0.013,0.01)");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("unbalanced bracket") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_lstring("S(1,2,3)"), ParseError);
  CHECK_THROWS_AS(parse_lstring("X(1)"), ParseError);
  CHECK_THROWS_AS(parse_lstring("S(1,2,3,4"), ParseError);
  CHECK_THROWS_AS(parse_lstring("]"), ParseError);
  CHECK_NOTHROW(parse_lstring("# comment\n  S(0.002, 0.01, 0, 137.5)\n"));
}

TEST_CASE("minimal seedling tree") {
  const LString l = parse_lstring(kSeedling);
  const AxialBinaryTree t = to_binary_tree(l);
  REQUIRE(t.size() == 3);
  const BinaryNode& root = t[t.root];
  CHECK(root.kind == NodeKind::Root);
  REQUIRE(root.lateral);
  REQUIRE(root.successor);
  CHECK(t[*root.lateral].kind == NodeKind::Cotyledons);
  CHECK(t[*root.successor].kind == NodeKind::Stem);
  CHECK(topology_signature(t) == "R(C,S)");
  CHECK(from_binary_tree(t) == l);
  CHECK(validate_biology(t).empty());

  AxialBinaryTree small;
  small.nodes.push_back({NodeKind::Root, std::vector<double>(node_arity(NodeKind::Root), 0.01), std::nullopt, 1});
  small.nodes.push_back({NodeKind::Cotyledons, std::vector<double>(node_arity(NodeKind::Cotyledons), 0.01),
                         std::nullopt, std::nullopt});
  CHECK(from_binary_tree(small).module_count() == 3);
  CHECK(to_binary_tree(from_binary_tree(small)) == small);
}

TEST_CASE("node arities") {
  CHECK(node_arity(NodeKind::Root) == 3);
  CHECK(node_arity(NodeKind::Stem) == 12);
  CHECK(node_arity(NodeKind::Branch) == 14);
  CHECK(node_arity(NodeKind::Cotyledons) == 4);
}

TEST_CASE("corpus round trips") {
  for (const LString& l : corpus(200)) {
    const std::string text = serialize(l);
    const LString back = parse_lstring(text);
    CHECK(back == l);
    CHECK(serialize(back) == text);
    const AxialBinaryTree t = to_binary_tree(l);
    CHECK(from_binary_tree(t) == l);
    CHECK(to_binary_tree(from_binary_tree(t)) == t);
    CHECK(validate_biology(t).empty());

    std::size_t laterals = 0;
    for (const auto& n : t.nodes) {
      if (n.lateral && t[*n.lateral].kind != NodeKind::Cotyledons) ++laterals;
    }
    CHECK(count_brackets(l) == laterals);
  }
}

TEST_CASE("biology violations") {
  const std::string branched = std::string(kSeedling) +
                               "[B(40,0.3)S(0.003,0.004,8,140)P(0.0005,0.0003,55,0.01,0.3)L(0.2,0.01,0.008)]";
  const AxialBinaryTree thick = to_binary_tree(parse_lstring(branched));
  const auto v = validate_biology(thick);
  REQUIRE(v.size() == 1);
  CHECK(thick[v[0].node].kind == NodeKind::Branch);

  AxialBinaryTree zero = to_binary_tree(parse_lstring(kSeedling));
  const std::size_t stem = *zero[zero.root].successor;
  zero[stem].params[stem_offset(NodeKind::Stem) + 1] = 0.0;
  CHECK(validate_biology(zero).size() == 1);
}

TEST_CASE("structure checks") {
  AxialBinaryTree t = to_binary_tree(parse_lstring(kSeedling));
  CHECK_NOTHROW(check_tree(t));
  AxialBinaryTree bad = t;
  bad[1].params.pop_back();
  CHECK_THROWS_AS(check_tree(bad), StructureError);
  AxialBinaryTree two_roots = t;
  two_roots[2].kind = NodeKind::Root;
  two_roots[2].params.resize(3);
  CHECK_THROWS_AS(check_tree(two_roots), StructureError);
}

TEST_CASE("quantize is a fixed point of serialization") {
  for (double v : {0.1234567891, 137.5, 1e-7, 123456789.0, -0.000123456789}) {
    const double q = quantize(v);
    CHECK(quantize(q) == q);
  }
}
