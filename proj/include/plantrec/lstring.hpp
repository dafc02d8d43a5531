#pragma once

// L-String representation of Chenopodium album plants, its text syntax, and the
// lossless conversion to the combined-node binary axial tree.
//
// Text syntax: modules are single letters with parenthesized decimal
// parameters, branches are enclosed in brackets:
//
//   S(d,len,grow,phyllo)   stem
//   C(angle,len,curv)      cotyledon
//   P(d0,d1,angle,len,el)  petiole
//   L(curv,len,width)      leaf
//   B(angle,el)            branch
//
// Species pattern understood by the tree conversion:
//
//   plant  := S C C unit*
//   unit   := S P L lateral?
//   branch := B S P L lateral? unit*
//   lateral:= '[' branch ']'
//
// Petioles, leaves and cotyledons are interpreted as lateral organs of the
// preceding stem and do not move the stem turtle.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace plantrec {

enum class ModuleKind { Stem, Cotyledon, Petiole, Leaf, Branch };

std::size_t module_arity(ModuleKind kind);
char module_symbol(ModuleKind kind);

// Parameter layout of each module.
namespace stem_p {
inline constexpr std::size_t diameter = 0, length = 1, growing_angle = 2, phyllotaxis = 3;
}
namespace cotyledon_p {
inline constexpr std::size_t angle = 0, length = 1, curvature = 2;
}
namespace petiole_p {
inline constexpr std::size_t start_diameter = 0, end_diameter = 1, angle = 2, length = 3,
                             elasticity = 4;
}
namespace leaf_p {
inline constexpr std::size_t curvature = 0, length = 1, width = 2;
}
namespace branch_p {
inline constexpr std::size_t angle = 0, elasticity = 1;
}

struct OrganModule {
  ModuleKind kind;
  std::vector<double> params;

  bool operator==(const OrganModule&) const = default;
};

struct OpenBracket {
  bool operator==(const OpenBracket&) const = default;
};
struct CloseBracket {
  bool operator==(const CloseBracket&) const = default;
};

using LItem = std::variant<OrganModule, OpenBracket, CloseBracket>;

struct LString {
  std::vector<LItem> items;

  bool operator==(const LString&) const = default;
  std::size_t module_count() const;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

class StructureError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parses L-String text. Whitespace is ignored and lines whose first
/// non-blank character is '#' are comments.
LString parse_lstring(std::string_view text);

/// Canonical text: 6 significant digits, no whitespace, single line.
std::string serialize(const LString& l);

/// Rounds a value to what the canonical text can represent exactly.
double quantize(double value);

// ---------------------------------------------------------------------------
// Binary axial tree

enum class NodeKind { Root = 0, Stem = 1, Branch = 2, Cotyledons = 3 };
inline constexpr std::size_t kNodeKinds = 4;
inline constexpr std::array<NodeKind, kNodeKinds> kAllNodeKinds = {
    NodeKind::Root, NodeKind::Stem, NodeKind::Branch, NodeKind::Cotyledons};

std::size_t node_arity(NodeKind kind);
std::string_view node_kind_name(NodeKind kind);

// Offsets of the concatenated module parameters inside combined nodes.
namespace root_p {
inline constexpr std::size_t diameter = 0, length = 1, phyllotaxis = 2;
}
namespace cotyledons_p {
inline constexpr std::size_t angle = 0, length = 1, curvature_1 = 2, curvature_2 = 3;
}
/// Offset of the stem block inside a Stem (0) or Branch (2) node.
std::size_t stem_offset(NodeKind kind);
inline std::size_t petiole_offset(NodeKind kind) { return stem_offset(kind) + 4; }
inline std::size_t leaf_offset(NodeKind kind) { return stem_offset(kind) + 9; }

/// Growing angle of the plant's first stem; constant across all plants and
/// therefore not stored in the Root node.
inline constexpr double kRootGrowingAngle = 0.0;

struct BinaryNode {
  NodeKind kind;
  std::vector<double> params;
  std::optional<std::size_t> successor;
  std::optional<std::size_t> lateral;

  bool operator==(const BinaryNode&) const = default;
};

struct AxialBinaryTree {
  std::vector<BinaryNode> nodes;
  std::size_t root = 0;

  bool operator==(const AxialBinaryTree&) const = default;

  std::size_t size() const { return nodes.size(); }
  const BinaryNode& operator[](std::size_t i) const { return nodes.at(i); }
  BinaryNode& operator[](std::size_t i) { return nodes.at(i); }
};

/// Checks arities, child counts, reachability and the single-Root rule.
/// Throws StructureError describing the first problem found.
void check_tree(const AxialBinaryTree& t);

/// Same shape and node kinds (parameters ignored).
bool same_topology(const AxialBinaryTree& a, const AxialBinaryTree& b);

/// Compact shape signature, e.g. "R(C,S(B,S))"; equal iff topologies match.
std::string topology_signature(const AxialBinaryTree& t);

AxialBinaryTree to_binary_tree(const LString& l);
/// As above; additionally fills `item_node[i]` with the tree node that absorbed
/// L-String item i (brackets map to nullopt).
AxialBinaryTree to_binary_tree(const LString& l,
                               std::vector<std::optional<std::size_t>>& item_node);
LString from_binary_tree(const AxialBinaryTree& t);

struct Violation {
  std::size_t node;
  std::string message;
};

/// Biological sanity checks: positive sizes and lateral branches no thicker
/// than the stem that bears them.
std::vector<Violation> validate_biology(const AxialBinaryTree& t);

/// Parent index of every node (nullopt for the root).
std::vector<std::optional<std::size_t>> parent_links(const AxialBinaryTree& t);

/// Node indices, parents before children.
std::vector<std::size_t> preorder(const AxialBinaryTree& t);

}  // namespace plantrec
