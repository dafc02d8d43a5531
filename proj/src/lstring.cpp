#include "plantrec/lstring.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace plantrec {

std::size_t module_arity(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Stem: return 4;
    case ModuleKind::Cotyledon: return 3;
    case ModuleKind::Petiole: return 5;
    case ModuleKind::Leaf: return 3;
    case ModuleKind::Branch: return 2;
  }
  return 0;
}

char module_symbol(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Stem: return 'S';
    case ModuleKind::Cotyledon: return 'C';
    case ModuleKind::Petiole: return 'P';
    case ModuleKind::Leaf: return 'L';
    case ModuleKind::Branch: return 'B';
  }
  return '?';
}

std::size_t LString::module_count() const {
  std::size_t n = 0;
  for (const auto& it : items) n += std::holds_alternative<OrganModule>(it) ? 1 : 0;
  return n;
}

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

namespace {

std::optional<ModuleKind> kind_from_symbol(char c) {
  switch (c) {
    case 'S': return ModuleKind::Stem;
    case 'C': return ModuleKind::Cotyledon;
    case 'P': return ModuleKind::Petiole;
    case 'L': return ModuleKind::Leaf;
    case 'B': return ModuleKind::Branch;
    default: return std::nullopt;
  }
}

class Lexer {
public:
  explicit Lexer(std::string_view text) : text_(text) { skip(); }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return col_; }

  char take() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
      line_start_ = true;
    } else {
      ++col_;
    }
    skip();
    return c;
  }

  // Reads characters that can form a decimal number; whitespace inside a
  // number is not allowed, whitespace around it is.
  std::string take_number_text() {
    std::string s;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E' || std::isalpha(static_cast<unsigned char>(c))) {
        s.push_back(c);
        ++pos_;
        ++col_;
      } else {
        break;
      }
    }
    skip();
    return s;
  }

private:
  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') {
        ++pos_;
        ++line_;
        col_ = 1;
        line_start_ = true;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
        ++col_;
      } else if (c == '#' && line_start_) {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        line_start_ = false;
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
  bool line_start_ = true;
};

}  // namespace

LString parse_lstring(std::string_view text) {
  Lexer lex(text);
  LString out;
  struct Open {
    std::size_t line, col, item;
  };
  std::vector<Open> open;
  while (!lex.at_end()) {
    const std::size_t line = lex.line();
    const std::size_t col = lex.column();
    const char c = lex.peek();
    if (c == '[') {
      lex.take();
      open.push_back({line, col, out.items.size()});
      out.items.emplace_back(OpenBracket{});
      continue;
    }
    if (c == ']') {
      if (open.empty()) throw ParseError("unbalanced bracket: unexpected ']'", line, col);
      if (open.back().item + 1 == out.items.size()) {
        throw ParseError("empty branch: '[' must contain at least one module", line, col);
      }
      open.pop_back();
      lex.take();
      out.items.emplace_back(CloseBracket{});
      continue;
    }
    const auto kind = kind_from_symbol(c);
    if (!kind) throw ParseError(std::string("unknown symbol '") + c + "'", line, col);
    lex.take();
    if (lex.at_end() || lex.peek() != '(') {
      throw ParseError(std::string("expected '(' after '") + c + "'", lex.line(), lex.column());
    }
    lex.take();
    OrganModule m{*kind, {}};
    for (;;) {
      const std::size_t nline = lex.line();
      const std::size_t ncol = lex.column();
      const std::string num = lex.take_number_text();
      char* end = nullptr;
      const double v = num.empty() ? 0.0 : std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric parameter '" + num + "'", nline, ncol);
      }
      m.params.push_back(v);
      if (lex.at_end()) throw ParseError("unterminated parameter list", lex.line(), lex.column());
      const char sep = lex.take();
      if (sep == ')') break;
      if (sep != ',') {
        throw ParseError(std::string("unexpected '") + sep + "' in parameter list", lex.line(),
                         lex.column());
      }
    }
    if (m.params.size() != module_arity(*kind)) {
      std::ostringstream msg;
      msg << "wrong parameter arity for '" << c << "': expected " << module_arity(*kind)
          << ", got " << m.params.size();
      throw ParseError(msg.str(), line, col);
    }
    out.items.emplace_back(std::move(m));
  }
  if (!open.empty()) throw ParseError("unbalanced bracket: '[' never closed", open.back().line,
                                      open.back().col);
  if (out.items.empty()) throw ParseError("empty L-String", lex.line(), lex.column());
  const auto* first = std::get_if<OrganModule>(&out.items.front());
  if (first == nullptr || first->kind != ModuleKind::Stem) {
    throw ParseError("an L-String must start with a stem module", 1, 1);
  }
  return out;
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

double quantize(double value) { return std::strtod(format_number(value).c_str(), nullptr); }

std::string serialize(const LString& l) {
  std::string out;
  for (const auto& item : l.items) {
    if (std::holds_alternative<OpenBracket>(item)) {
      out.push_back('[');
    } else if (std::holds_alternative<CloseBracket>(item)) {
      out.push_back(']');
    } else {
      const auto& m = std::get<OrganModule>(item);
      out.push_back(module_symbol(m.kind));
      out.push_back('(');
      for (std::size_t i = 0; i < m.params.size(); ++i) {
        if (i) out.push_back(',');
        out += format_number(m.params[i]);
      }
      out.push_back(')');
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t node_arity(NodeKind kind) {
  switch (kind) {
    case NodeKind::Root: return 3;
    case NodeKind::Stem: return 12;
    case NodeKind::Branch: return 14;
    case NodeKind::Cotyledons: return 4;
  }
  return 0;
}

std::string_view node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Root: return "Root";
    case NodeKind::Stem: return "Stem";
    case NodeKind::Branch: return "Branch";
    case NodeKind::Cotyledons: return "Cotyledons";
  }
  return "?";
}

std::size_t stem_offset(NodeKind kind) {
  switch (kind) {
    case NodeKind::Stem: return 0;
    case NodeKind::Branch: return 2;
    default: throw std::invalid_argument("node kind has no stem block");
  }
}

namespace {

std::string node_label(const AxialBinaryTree& t, std::size_t i) {
  return std::string(node_kind_name(t.nodes[i].kind)) + " node " + std::to_string(i);
}

}  // namespace

void check_tree(const AxialBinaryTree& t) {
  if (t.nodes.empty()) throw StructureError("tree has no nodes");
  if (t.root >= t.nodes.size()) throw StructureError("root index out of range");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (n.params.size() != node_arity(n.kind)) {
      throw StructureError(node_label(t, i) + " has " + std::to_string(n.params.size()) +
                           " parameters, expected " + std::to_string(node_arity(n.kind)));
    }
    roots += n.kind == NodeKind::Root ? 1 : 0;
  }
  if (roots != 1 || t.nodes[t.root].kind != NodeKind::Root) {
    throw StructureError("tree must contain exactly one Root node, at the root");
  }
  std::vector<int> seen(t.nodes.size(), 0);
  std::vector<std::size_t> stack{t.root};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (seen[i]++) throw StructureError("node " + std::to_string(i) + " reached twice (cycle)");
    const auto& n = t.nodes[i];
    auto check_child = [&](const std::optional<std::size_t>& c, bool lateral) {
      if (!c) return;
      if (*c >= t.nodes.size()) throw StructureError(node_label(t, i) + " has a dangling child");
      const NodeKind ck = t.nodes[*c].kind;
      NodeKind want;
      if (n.kind == NodeKind::Cotyledons) {
        throw StructureError(node_label(t, i) + " must be childless");
      } else if (!lateral) {
        want = NodeKind::Stem;
      } else {
        want = n.kind == NodeKind::Root ? NodeKind::Cotyledons : NodeKind::Branch;
      }
      if (ck != want) {
        throw StructureError(node_label(t, i) + " has a " + std::string(node_kind_name(ck)) +
                             (lateral ? " lateral" : " successor") + " child, expected " +
                             std::string(node_kind_name(want)));
      }
      stack.push_back(*c);
    };
    check_child(n.lateral, true);
    check_child(n.successor, false);
    if (n.kind == NodeKind::Root && !n.lateral) {
      throw StructureError("Root node must carry the Cotyledons as lateral child");
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw StructureError("node " + std::to_string(i) + " unreachable from root");
  }
}

bool same_topology(const AxialBinaryTree& a, const AxialBinaryTree& b) {
  return topology_signature(a) == topology_signature(b);
}

std::string topology_signature(const AxialBinaryTree& t) {
  std::function<std::string(std::size_t)> rec = [&](std::size_t i) {
    const auto& n = t.nodes.at(i);
    std::string s(1, node_kind_name(n.kind)[0]);
    if (n.lateral || n.successor) {
      s += '(';
      s += n.lateral ? rec(*n.lateral) : std::string("-");
      s += ',';
      s += n.successor ? rec(*n.successor) : std::string("-");
      s += ')';
    }
    return s;
  };
  return rec(t.root);
}

// ---------------------------------------------------------------------------
// L-String -> tree

namespace {

class TreeBuilder {
public:
  explicit TreeBuilder(const LString& l) : items_(l.items), item_node_(l.items.size()) {}

  std::vector<std::optional<std::size_t>> take_item_nodes() { return std::move(item_node_); }

  AxialBinaryTree build() {
    const auto& root_stem = expect_module(ModuleKind::Stem, "root stem");
    if (root_stem.params[stem_p::growing_angle] != kRootGrowingAngle) {
      fail("root stem growing angle must be " + std::to_string(kRootGrowingAngle));
    }
    const auto& c1 = expect_module(ModuleKind::Cotyledon, "first cotyledon");
    const auto& c2 = expect_module(ModuleKind::Cotyledon, "second cotyledon");
    if (c1.params[cotyledon_p::angle] != c2.params[cotyledon_p::angle] ||
        c1.params[cotyledon_p::length] != c2.params[cotyledon_p::length]) {
      fail("cotyledon pair must share angle and length", pos_ - 1);
    }
    tree_.root = add(NodeKind::Root, {root_stem.params[stem_p::diameter],
                                      root_stem.params[stem_p::length],
                                      root_stem.params[stem_p::phyllotaxis]});
    item_node_[0] = tree_.root;
    const std::size_t cot =
        add(NodeKind::Cotyledons,
            {c1.params[cotyledon_p::angle], c1.params[cotyledon_p::length],
             c1.params[cotyledon_p::curvature], c2.params[cotyledon_p::curvature]});
    item_node_[1] = item_node_[2] = cot;
    tree_.nodes[tree_.root].lateral = cot;
    tree_.nodes[tree_.root].successor = parse_units();
    if (pos_ != items_.size()) fail("unexpected item after the main axis");
    return std::move(tree_);
  }

private:
  [[noreturn]] void fail(const std::string& what, std::optional<std::size_t> at = {}) const {
    throw StructureError("item " + std::to_string(at.value_or(pos_)) + ": " + what);
  }

  const OrganModule* peek_module() const {
    if (pos_ >= items_.size()) return nullptr;
    return std::get_if<OrganModule>(&items_[pos_]);
  }

  const OrganModule& expect_module(ModuleKind kind, const char* what) {
    const OrganModule* m = peek_module();
    if (m == nullptr || m->kind != kind) {
      fail(std::string("expected ") + what + " (" + module_symbol(kind) + ")");
    }
    ++pos_;
    return *m;
  }

  void mark(std::size_t start, std::size_t node) {
    for (std::size_t k = start; k < pos_; ++k) item_node_[k] = node;
  }

  std::size_t add(NodeKind kind, std::vector<double> params) {
    tree_.nodes.push_back({kind, std::move(params), std::nullopt, std::nullopt});
    return tree_.nodes.size() - 1;
  }

  void append_stem_petiole_leaf(std::vector<double>& params) {
    const auto& s = expect_module(ModuleKind::Stem, "stem");
    const auto& p = expect_module(ModuleKind::Petiole, "petiole after stem");
    const auto& l = expect_module(ModuleKind::Leaf, "leaf after petiole");
    params.insert(params.end(), s.params.begin(), s.params.end());
    params.insert(params.end(), p.params.begin(), p.params.end());
    params.insert(params.end(), l.params.begin(), l.params.end());
  }

  std::optional<std::size_t> parse_lateral() {
    if (pos_ >= items_.size() || !std::holds_alternative<OpenBracket>(items_[pos_])) {
      return std::nullopt;
    }
    ++pos_;
    const std::size_t b = parse_branch();
    if (pos_ >= items_.size() || !std::holds_alternative<CloseBracket>(items_[pos_])) {
      fail("expected ']' closing the branch");
    }
    ++pos_;
    if (pos_ < items_.size() && std::holds_alternative<OpenBracket>(items_[pos_])) {
      fail("a node can bear at most one lateral branch");
    }
    return b;
  }

  // unit* ; returns the first unit (successor of the caller)
  std::optional<std::size_t> parse_units() {
    std::optional<std::size_t> first;
    std::optional<std::size_t> prev;
    while (const OrganModule* m = peek_module()) {
      if (m->kind != ModuleKind::Stem) fail("expected stem starting a new unit");
      std::vector<double> params;
      const std::size_t start = pos_;
      append_stem_petiole_leaf(params);
      const std::size_t n = add(NodeKind::Stem, std::move(params));
      mark(start, n);
      tree_.nodes[n].lateral = parse_lateral();
      if (prev) tree_.nodes[*prev].successor = n;
      if (!first) first = n;
      prev = n;
    }
    if (pos_ < items_.size() && std::holds_alternative<OpenBracket>(items_[pos_])) {
      fail("branch must follow a stem-petiole-leaf unit");
    }
    return first;
  }

  std::size_t parse_branch() {
    const std::size_t start = pos_;
    const auto& b = expect_module(ModuleKind::Branch, "branch module opening a bracket");
    std::vector<double> params(b.params.begin(), b.params.end());
    append_stem_petiole_leaf(params);
    const std::size_t n = add(NodeKind::Branch, std::move(params));
    mark(start, n);
    tree_.nodes[n].lateral = parse_lateral();
    tree_.nodes[n].successor = parse_units();
    return n;
  }

  const std::vector<LItem>& items_;
  std::vector<std::optional<std::size_t>> item_node_;
  std::size_t pos_ = 0;
  AxialBinaryTree tree_;
};

}  // namespace

AxialBinaryTree to_binary_tree(const LString& l) { return TreeBuilder(l).build(); }

AxialBinaryTree to_binary_tree(const LString& l,
                               std::vector<std::optional<std::size_t>>& item_node) {
  TreeBuilder b(l);
  AxialBinaryTree t = b.build();
  item_node = b.take_item_nodes();
  return t;
}

// ---------------------------------------------------------------------------
// tree -> L-String

namespace {

class Emitter {
public:
  explicit Emitter(const AxialBinaryTree& t) : t_(t) {}

  LString emit() {
    const auto& root = t_.nodes[t_.root];
    const auto& cot = t_.nodes[*root.lateral];
    module(ModuleKind::Stem, {root.params[root_p::diameter], root.params[root_p::length],
                              kRootGrowingAngle, root.params[root_p::phyllotaxis]});
    const double a = cot.params[cotyledons_p::angle];
    const double len = cot.params[cotyledons_p::length];
    module(ModuleKind::Cotyledon, {a, len, cot.params[cotyledons_p::curvature_1]});
    module(ModuleKind::Cotyledon, {a, len, cot.params[cotyledons_p::curvature_2]});
    if (root.successor) unit_chain(*root.successor);
    return std::move(out_);
  }

private:
  void module(ModuleKind kind, std::vector<double> params) {
    out_.items.emplace_back(OrganModule{kind, std::move(params)});
  }

  void stem_petiole_leaf(const BinaryNode& n) {
    const std::size_t o = stem_offset(n.kind);
    const auto& p = n.params;
    module(ModuleKind::Stem, {p.begin() + o, p.begin() + o + 4});
    module(ModuleKind::Petiole, {p.begin() + o + 4, p.begin() + o + 9});
    module(ModuleKind::Leaf, {p.begin() + o + 9, p.begin() + o + 12});
  }

  void lateral(const BinaryNode& n) {
    if (!n.lateral) return;
    out_.items.emplace_back(OpenBracket{});
    branch(*n.lateral);
    out_.items.emplace_back(CloseBracket{});
  }

  void unit_chain(std::size_t i) {
    for (std::optional<std::size_t> cur = i; cur; cur = t_.nodes[*cur].successor) {
      const auto& n = t_.nodes[*cur];
      stem_petiole_leaf(n);
      lateral(n);
    }
  }

  void branch(std::size_t i) {
    const auto& n = t_.nodes[i];
    module(ModuleKind::Branch, {n.params[0], n.params[1]});
    stem_petiole_leaf(n);
    lateral(n);
    if (n.successor) unit_chain(*n.successor);
  }

  const AxialBinaryTree& t_;
  LString out_;
};

}  // namespace

LString from_binary_tree(const AxialBinaryTree& t) {
  check_tree(t);
  return Emitter(t).emit();
}

// ---------------------------------------------------------------------------

std::vector<Violation> validate_biology(const AxialBinaryTree& t) {
  std::vector<Violation> out;
  auto positive = [&](std::size_t node, std::size_t idx, const char* what) {
    if (!(t.nodes[node].params[idx] > 0.0)) {
      out.push_back({node, std::string(what) + " must be positive"});
    }
  };
  auto stem_diameter = [&](std::size_t i) {
    const auto& n = t.nodes[i];
    return n.kind == NodeKind::Root ? n.params[root_p::diameter]
                                    : n.params[stem_offset(n.kind) + stem_p::diameter];
  };
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    switch (n.kind) {
      case NodeKind::Root:
        positive(i, root_p::diameter, "root diameter");
        positive(i, root_p::length, "root length");
        break;
      case NodeKind::Cotyledons:
        positive(i, cotyledons_p::length, "cotyledon length");
        break;
      case NodeKind::Stem:
      case NodeKind::Branch: {
        const std::size_t s = stem_offset(n.kind);
        positive(i, s + stem_p::diameter, "stem diameter");
        positive(i, s + stem_p::length, "stem length");
        positive(i, s + 4 + petiole_p::start_diameter, "petiole start diameter");
        positive(i, s + 4 + petiole_p::end_diameter, "petiole end diameter");
        positive(i, s + 4 + petiole_p::length, "petiole length");
        positive(i, s + 9 + leaf_p::length, "leaf length");
        positive(i, s + 9 + leaf_p::width, "leaf width");
        break;
      }
    }
    if (n.lateral && t.nodes[*n.lateral].kind == NodeKind::Branch &&
        stem_diameter(*n.lateral) > stem_diameter(i)) {
      out.push_back({*n.lateral, "lateral branch is thicker than the stem bearing it"});
    }
  }
  return out;
}

std::vector<std::optional<std::size_t>> parent_links(const AxialBinaryTree& t) {
  std::vector<std::optional<std::size_t>> parent(t.nodes.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    if (t.nodes[i].lateral) parent[*t.nodes[i].lateral] = i;
    if (t.nodes[i].successor) parent[*t.nodes[i].successor] = i;
  }
  return parent;
}

std::vector<std::size_t> preorder(const AxialBinaryTree& t) {
  std::vector<std::size_t> order;
  std::vector<std::size_t> stack{t.root};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    order.push_back(i);
    const auto& n = t.nodes[i];
    if (n.successor) stack.push_back(*n.successor);
    if (n.lateral) stack.push_back(*n.lateral);
  }
  return order;
}

}  // namespace plantrec
