#include "plantrec/rvnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace plantrec {

using num::MlpCache;
using num::Vector;

namespace {

std::size_t kind_index(NodeKind k) { return static_cast<std::size_t>(k); }

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaler

void ParamScaler::fit(const std::vector<AxialBinaryTree>& trees) {
  for (NodeKind k : kAllNodeKinds) {
    const std::size_t ki = kind_index(k);
    lo[ki].assign(node_arity(k), std::numeric_limits<double>::infinity());
    hi[ki].assign(node_arity(k), -std::numeric_limits<double>::infinity());
  }
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      const std::size_t ki = kind_index(n.kind);
      for (std::size_t d = 0; d < n.params.size(); ++d) {
        lo[ki][d] = std::min(lo[ki][d], n.params[d]);
        hi[ki][d] = std::max(hi[ki][d], n.params[d]);
      }
    }
  }
  // Kinds that never occur get a neutral range.
  for (std::size_t ki = 0; ki < kNodeKinds; ++ki) {
    for (std::size_t d = 0; d < lo[ki].size(); ++d) {
      if (!std::isfinite(lo[ki][d])) lo[ki][d] = hi[ki][d] = 0.0;
    }
  }
}

bool ParamScaler::fitted() const {
  for (NodeKind k : kAllNodeKinds) {
    if (lo[kind_index(k)].size() != node_arity(k)) return false;
  }
  return true;
}

Vector ParamScaler::scale(NodeKind kind, const std::vector<double>& params) const {
  const std::size_t ki = kind_index(kind);
  if (params.size() != node_arity(kind) || lo[ki].size() != params.size()) {
    throw num::ShapeError("scaler: " + std::string(node_kind_name(kind)) + " node expects " +
                          std::to_string(node_arity(kind)) + " parameters, got " +
                          std::to_string(params.size()));
  }
  Vector x(static_cast<Eigen::Index>(params.size()));
  for (std::size_t d = 0; d < params.size(); ++d) {
    const double span = hi[ki][d] - lo[ki][d];
    x[static_cast<Eigen::Index>(d)] = span > 0.0 ? 2.0 * (params[d] - lo[ki][d]) / span - 1.0 : 0.0;
  }
  return x;
}

std::vector<double> ParamScaler::unscale(NodeKind kind, const Vector& x) const {
  const std::size_t ki = kind_index(kind);
  std::vector<double> p(lo[ki].size());
  for (std::size_t d = 0; d < p.size(); ++d) {
    const double span = hi[ki][d] - lo[ki][d];
    p[d] = lo[ki][d] + 0.5 * (x[static_cast<Eigen::Index>(d)] + 1.0) * span;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Model

RvnnModel::RvnnModel(RvnnConfig cfg) : config(cfg) {
  const std::size_t L = cfg.latent;
  const std::size_t H = cfg.hidden;
  for (NodeKind k : kAllNodeKinds) {
    node_enc[kind_index(k)] = num::DenseLayer(node_arity(k), L, num::Activation::Tanh);
    node_dec[kind_index(k)] = num::DenseLayer(L, node_arity(k), num::Activation::Tanh);
  }
  enc_sib = num::MlpBlock(2 * L, H, L);
  enc_pc = num::MlpBlock(2 * L, H, L);
  dec_sib = num::MlpBlock(L, H, 2 * L);
  dec_pc = num::MlpBlock(L, H, 2 * L);
  clf_split = num::MlpBlock(L, H, kSplitClasses, num::Activation::Identity);
  clf_node = num::MlpBlock(L, H, kNodeKinds, num::Activation::Identity);
}

void RvnnModel::init(num::Rng& rng) {
  for (auto& l : node_enc) l.init(rng);
  for (auto& l : node_dec) l.init(rng);
  for (auto* b : {&enc_sib, &enc_pc, &dec_sib, &dec_pc, &clf_split, &clf_node}) b->init(rng);
}

void RvnnModel::set_zero() {
  for (auto& l : node_enc) l.set_zero();
  for (auto& l : node_dec) l.set_zero();
  for (auto* b : {&enc_sib, &enc_pc, &dec_sib, &dec_pc, &clf_split, &clf_node}) b->set_zero();
}

std::vector<num::ParamView> RvnnModel::param_views() {
  std::vector<num::ParamView> v;
  for (NodeKind k : kAllNodeKinds) {
    const std::string name(node_kind_name(k));
    node_enc[kind_index(k)].append_params("node_enc." + name, v);
    node_dec[kind_index(k)].append_params("node_dec." + name, v);
  }
  enc_sib.append_params("enc_sib", v);
  enc_pc.append_params("enc_pc", v);
  dec_sib.append_params("dec_sib", v);
  dec_pc.append_params("dec_pc", v);
  clf_split.append_params("clf_split", v);
  clf_node.append_params("clf_node", v);
  return v;
}

// ---------------------------------------------------------------------------
// Building blocks

Vector encode_node(const RvnnModel& m, const BinaryNode& node) {
  return m.node_enc[kind_index(node.kind)].forward(m.scaler.scale(node.kind, node.params));
}

std::vector<double> decode_node(const RvnnModel& m, const Vector& s, NodeKind kind) {
  return m.scaler.unscale(kind, m.node_dec[kind_index(kind)].forward(s));
}

Vector merge(const RvnnModel& m, MergeType type, const Vector& s1, const Vector& s2) {
  const auto& block = type == MergeType::Sibling ? m.enc_sib : m.enc_pc;
  return block.forward(concat(s1, s2));
}

std::pair<Vector, Vector> split(const RvnnModel& m, MergeType type, const Vector& s) {
  const auto& block = type == MergeType::Sibling ? m.dec_sib : m.dec_pc;
  const Vector y = block.forward(s);
  const auto L = static_cast<Eigen::Index>(m.config.latent);
  return {y.head(L), y.tail(L)};
}

Vector encode_tree(const RvnnModel& m, const AxialBinaryTree& t, EncodeTrace* trace) {
  const auto order = preorder(t);
  std::vector<Vector> z(t.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t n = *it;
    const BinaryNode& node = t.nodes[n];
    Vector h = encode_node(m, node);
    if (!node.lateral && !node.successor) {
      z[n] = std::move(h);
      continue;
    }
    Vector c;
    if (node.lateral && node.successor) {
      c = merge(m, MergeType::Sibling, z[*node.lateral], z[*node.successor]);
      if (trace) trace->steps.push_back({MergeType::Sibling, n, z[*node.lateral], z[*node.successor], c});
    } else {
      c = z[node.lateral ? *node.lateral : *node.successor];
    }
    z[n] = merge(m, MergeType::ParentChild, h, c);
    if (trace) trace->steps.push_back({MergeType::ParentChild, n, h, c, z[n]});
  }
  return z[t.root];
}

// ---------------------------------------------------------------------------
// Free decoding

namespace {

std::optional<NodeKind> expected_lateral(NodeKind parent) {
  switch (parent) {
    case NodeKind::Root: return NodeKind::Cotyledons;
    case NodeKind::Stem:
    case NodeKind::Branch: return NodeKind::Branch;
    case NodeKind::Cotyledons: return std::nullopt;
  }
  return std::nullopt;
}

class FreeDecoder {
public:
  FreeDecoder(const RvnnModel& m, const DecodeLimits& limits, DecodeResult& out)
      : m_(m), limits_(limits), out_(out) {}

  std::size_t subtree(const Vector& s, std::size_t depth) {
    if (depth > limits_.max_depth) {
      throw DecodeBudgetError("decode budget exceeded: depth above " + std::to_string(limits_.max_depth));
    }
    auto decision = static_cast<SplitDecision>(num::argmax(m_.clf_split.forward(s)));
    if (decision == SplitDecision::Sibling) {
      repair("sibling split where a single subtree was expected; decoded as parent-child");
      decision = SplitDecision::ParentChild;
    }
    if (decision == SplitDecision::Stop) return add_node(s);
    const auto [sx, sc] = split(m_, MergeType::ParentChild, s);
    const std::size_t n = add_node(sx);
    children(n, sc, depth + 1);
    return n;
  }

  void finish_root(std::size_t root) {
    auto& t = out_.tree;
    t.root = root;
    if (t.nodes[root].kind != NodeKind::Root) {
      repair("top node decoded as " + std::string(node_kind_name(t.nodes[root].kind)) + "; coerced to Root");
      coerce(root, NodeKind::Root);
    }
    const auto lat = t.nodes[root].lateral;
    if (lat && t.nodes[*lat].kind != NodeKind::Cotyledons) {
      repair(std::string(node_kind_name(t.nodes[*lat].kind)) + " lateral of Root coerced to Cotyledons");
      coerce(*lat, NodeKind::Cotyledons);
    }
    if (!lat) {
      repair("Root without cotyledons; synthesized from the root latent");
      const std::size_t c = push(NodeKind::Cotyledons, latent_[root]);
      t.nodes[root].lateral = c;
    }
    compact();
  }

private:
  void repair(std::string msg) { out_.repairs.push_back(std::move(msg)); }

  std::size_t push(NodeKind kind, const Vector& latent) {
    if (out_.tree.nodes.size() >= limits_.max_nodes) {
      throw DecodeBudgetError("decode budget exceeded: more than " + std::to_string(limits_.max_nodes) +
                              " nodes");
    }
    out_.tree.nodes.push_back({kind, decode_node(m_, latent, kind), std::nullopt, std::nullopt});
    latent_.push_back(latent);
    return out_.tree.nodes.size() - 1;
  }

  std::size_t add_node(const Vector& s) {
    return push(static_cast<NodeKind>(num::argmax(m_.clf_node.forward(s))), s);
  }

  void coerce(std::size_t n, NodeKind kind) {
    auto& node = out_.tree.nodes[n];
    node.kind = kind;
    node.params = decode_node(m_, latent_[n], kind);
    if (kind == NodeKind::Cotyledons && (node.lateral || node.successor)) {
      repair("children of a Cotyledons node dropped");
      node.lateral.reset();
      node.successor.reset();
    }
    const auto want = expected_lateral(kind);
    if (node.lateral && want && out_.tree.nodes[*node.lateral].kind != *want) {
      const std::size_t lat = *node.lateral;
      repair(std::string(node_kind_name(out_.tree.nodes[lat].kind)) + " lateral of a coerced " +
             std::string(node_kind_name(kind)) + " coerced to " + std::string(node_kind_name(*want)));
      coerce(lat, *want);
    }
  }

  void children(std::size_t n, const Vector& sc, std::size_t depth) {
    std::vector<std::size_t> kids;
    if (static_cast<SplitDecision>(num::argmax(m_.clf_split.forward(sc))) == SplitDecision::Sibling) {
      const auto [a, b] = split(m_, MergeType::Sibling, sc);
      kids.push_back(subtree(a, depth + 1));
      kids.push_back(subtree(b, depth + 1));
    } else {
      kids.push_back(subtree(sc, depth));
    }
    attach(n, kids);
  }

  void attach(std::size_t n, const std::vector<std::size_t>& kids) {
    auto& t = out_.tree;
    const NodeKind pk = t.nodes[n].kind;
    const auto lateral_kind = expected_lateral(pk);
    if (!lateral_kind) {
      repair("children of a Cotyledons node dropped");
      return;
    }
    for (std::size_t kid : kids) {
      const NodeKind k = t.nodes[kid].kind;
      const bool wants_lateral = k == NodeKind::Cotyledons || k == NodeKind::Branch;
      bool use_lateral = wants_lateral ? !t.nodes[n].lateral : static_cast<bool>(t.nodes[n].successor);
      if (use_lateral && t.nodes[n].lateral) use_lateral = false;
      const NodeKind want = use_lateral ? *lateral_kind : NodeKind::Stem;
      if (k != want) {
        repair(std::string(node_kind_name(k)) + " child of " + std::string(node_kind_name(pk)) +
               " coerced to " + std::string(node_kind_name(want)));
        coerce(kid, want);
      }
      if (use_lateral) {
        t.nodes[n].lateral = kid;
      } else {
        t.nodes[n].successor = kid;
      }
    }
  }

  // Drops unreachable nodes and renumbers in preorder.
  void compact() {
    auto& t = out_.tree;
    const auto order = preorder(t);
    if (order.size() == t.nodes.size()) return;
    std::vector<std::size_t> remap(t.nodes.size(), 0);
    for (std::size_t i = 0; i < order.size(); ++i) remap[order[i]] = i;
    AxialBinaryTree c;
    for (std::size_t old : order) {
      BinaryNode node = t.nodes[old];
      if (node.lateral) node.lateral = remap[*node.lateral];
      if (node.successor) node.successor = remap[*node.successor];
      c.nodes.push_back(std::move(node));
    }
    c.root = 0;
    t = std::move(c);
  }

  const RvnnModel& m_;
  DecodeLimits limits_;
  DecodeResult& out_;
  std::vector<Vector> latent_;
};

}  // namespace

DecodeResult decode_tree(const RvnnModel& m, const Vector& s, const DecodeLimits& limits) {
  if (!s.allFinite()) throw std::invalid_argument("decode_tree: latent is not finite");
  DecodeResult out;
  FreeDecoder dec(m, limits, out);
  dec.finish_root(dec.subtree(s, 0));
  check_tree(out.tree);
  return out;
}

DecodeResult decode_tree(const RvnnModel& m, const Vector& s) { return decode_tree(m, s, m.limits); }

// ---------------------------------------------------------------------------
// Loss with teacher forcing and its reverse pass

namespace {

struct ClfEval {
  MlpCache cache;
  num::CrossEntropy ce;
};

struct NodeTape {
  // encoder
  Vector x, h, c, z;
  MlpCache enc_sib, enc_pc;
  // decoder
  Vector s;        // latent arriving at this subtree
  Vector sx, sc;   // parent-child split halves
  MlpCache dec_pc, dec_sib;
  ClfEval split_at_s, split_at_sc, stop, kind;
  MlpCache node_dec;
  Vector xhat;
};

ClfEval classify(const num::MlpBlock& clf, const Vector& v, std::size_t target) {
  ClfEval e;
  const Vector logits = clf.forward(v, &e.cache);
  e.ce = num::softmax_cross_entropy(logits, target);
  return e;
}

void check_finite(double v, const char* term, std::size_t node) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite " << term << " loss at node " << node;
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

LossBreakdown loss_total(const RvnnModel& m, const AxialBinaryTree& t, RvnnModel* grad) {
  const auto order = preorder(t);
  const auto L = static_cast<Eigen::Index>(m.config.latent);
  const LossWeights& w = m.config.weights;
  std::vector<NodeTape> tp(t.size());
  LossBreakdown loss;

  // Encoder, children before parents.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t n = *it;
    const BinaryNode& node = t.nodes[n];
    NodeTape& k = tp[n];
    k.x = m.scaler.scale(node.kind, node.params);
    k.h = m.node_enc[kind_index(node.kind)].forward(k.x);
    if (!node.lateral && !node.successor) {
      k.z = k.h;
      continue;
    }
    if (node.lateral && node.successor) {
      k.c = m.enc_sib.forward(concat(tp[*node.lateral].z, tp[*node.successor].z), &k.enc_sib);
    } else {
      k.c = tp[node.lateral ? *node.lateral : *node.successor].z;
    }
    k.z = m.enc_pc.forward(concat(k.h, k.c), &k.enc_pc);
  }

  // Teacher-forced decoder, parents before children.
  tp[t.root].s = tp[t.root].z;
  for (std::size_t n : order) {
    const BinaryNode& node = t.nodes[n];
    NodeTape& k = tp[n];
    const bool internal = node.lateral || node.successor;
    const Vector* stop_point = &k.s;
    if (internal) {
      k.split_at_s = classify(m.clf_split, k.s, static_cast<std::size_t>(SplitDecision::ParentChild));
      loss.split += k.split_at_s.ce.loss;
      const Vector y = m.dec_pc.forward(k.s, &k.dec_pc);
      k.sx = y.head(L);
      k.sc = y.tail(L);
      loss.step += ((k.h - k.sx).squaredNorm() + (k.c - k.sc).squaredNorm()) / static_cast<double>(L);
      stop_point = &k.sx;
      if (node.lateral && node.successor) {
        k.split_at_sc = classify(m.clf_split, k.sc, static_cast<std::size_t>(SplitDecision::Sibling));
        loss.split += k.split_at_sc.ce.loss;
        const Vector ys = m.dec_sib.forward(k.sc, &k.dec_sib);
        tp[*node.lateral].s = ys.head(L);
        tp[*node.successor].s = ys.tail(L);
        loss.step += ((tp[*node.lateral].z - ys.head(L)).squaredNorm() +
                      (tp[*node.successor].z - ys.tail(L)).squaredNorm()) /
                     static_cast<double>(L);
      } else {
        tp[node.lateral ? *node.lateral : *node.successor].s = k.sc;
      }
    }
    k.stop = classify(m.clf_split, *stop_point, static_cast<std::size_t>(SplitDecision::Stop));
    k.kind = classify(m.clf_node, *stop_point, kind_index(node.kind));
    loss.split += k.stop.ce.loss;
    loss.node += k.kind.ce.loss;
    k.xhat = m.node_dec[kind_index(node.kind)].forward(*stop_point);
    k.node_dec.x = *stop_point;
    loss.rec += (k.xhat - k.x).squaredNorm() / static_cast<double>(k.x.size());
    check_finite(loss.rec, "reconstruction", n);
    check_finite(loss.step, "step", n);
    check_finite(loss.split, "split", n);
    check_finite(loss.node, "node", n);
  }
  loss.total = w.rec * loss.rec + w.step * loss.step + w.split * loss.split + w.node * loss.node;
  if (grad == nullptr) return loss;

  // Reverse pass. Decoder first (children before parents), then encoder.
  std::vector<Vector> d_s(t.size(), Vector::Zero(L));
  std::vector<Vector> d_h(t.size(), Vector::Zero(L));
  std::vector<Vector> d_c(t.size(), Vector::Zero(L));
  std::vector<Vector> d_z(t.size(), Vector::Zero(L));
  const double ws = 2.0 * w.step / static_cast<double>(L);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t n = *it;
    const BinaryNode& node = t.nodes[n];
    NodeTape& k = tp[n];
    const std::size_t ki = kind_index(node.kind);
    const bool internal = node.lateral || node.successor;

    Vector d_p = m.clf_split.backward(k.stop.cache, w.split * k.stop.ce.dlogits, grad->clf_split);
    d_p += m.clf_node.backward(k.kind.cache, w.node * k.kind.ce.dlogits, grad->clf_node);
    const Vector d_xhat = (2.0 * w.rec / static_cast<double>(k.x.size())) * (k.xhat - k.x);
    d_p += m.node_dec[ki].backward(k.node_dec.x, k.xhat, d_xhat, grad->node_dec[ki]);

    if (!internal) {
      d_s[n] += d_p;
      continue;
    }
    Vector d_sx = d_p - ws * (k.h - k.sx);
    d_h[n] += ws * (k.h - k.sx);
    Vector d_sc = -ws * (k.c - k.sc);
    d_c[n] += ws * (k.c - k.sc);
    if (node.lateral && node.successor) {
      const std::size_t a = *node.lateral;
      const std::size_t b = *node.successor;
      const Vector ga = d_s[a] - ws * (tp[a].z - tp[a].s);
      const Vector gb = d_s[b] - ws * (tp[b].z - tp[b].s);
      d_z[a] += ws * (tp[a].z - tp[a].s);
      d_z[b] += ws * (tp[b].z - tp[b].s);
      d_sc += m.dec_sib.backward(k.dec_sib, concat(ga, gb), grad->dec_sib);
      d_sc += m.clf_split.backward(k.split_at_sc.cache, w.split * k.split_at_sc.ce.dlogits, grad->clf_split);
    } else {
      d_sc += d_s[node.lateral ? *node.lateral : *node.successor];
    }
    d_s[n] += m.dec_pc.backward(k.dec_pc, concat(d_sx, d_sc), grad->dec_pc);
    d_s[n] += m.clf_split.backward(k.split_at_s.cache, w.split * k.split_at_s.ce.dlogits, grad->clf_split);
  }
  d_z[t.root] += d_s[t.root];

  for (std::size_t n : order) {
    const BinaryNode& node = t.nodes[n];
    NodeTape& k = tp[n];
    const std::size_t ki = kind_index(node.kind);
    if (!node.lateral && !node.successor) {
      d_h[n] += d_z[n];
    } else {
      const Vector d_in = m.enc_pc.backward(k.enc_pc, d_z[n], grad->enc_pc);
      d_h[n] += d_in.head(L);
      const Vector dc = d_c[n] + d_in.tail(L);
      if (node.lateral && node.successor) {
        const Vector d_kids = m.enc_sib.backward(k.enc_sib, dc, grad->enc_sib);
        d_z[*node.lateral] += d_kids.head(L);
        d_z[*node.successor] += d_kids.tail(L);
      } else {
        d_z[node.lateral ? *node.lateral : *node.successor] += dc;
      }
    }
    m.node_enc[ki].backward(k.x, k.h, d_h[n], grad->node_enc[ki]);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Evaluation and training

AutoencoderStats evaluate_autoencoder(const RvnnModel& m, const std::vector<AxialBinaryTree>& trees) {
  AutoencoderStats st;
  st.trees = trees.size();
  if (trees.empty()) return st;
  std::size_t correct = 0;
  double se = 0.0;
  std::size_t dims = 0;
  for (const auto& t : trees) {
    st.loss += loss_total(m, t).total;
    const Vector s = encode_tree(m, t);
    try {
      const DecodeResult d = decode_tree(m, s);
      correct += same_topology(d.tree, t) ? 1 : 0;
      st.repaired += d.repairs.empty() ? 0 : 1;
    } catch (const DecodeBudgetError&) {
    }
    // Teacher-forced parameter reconstruction along the true structure.
    const auto order = preorder(t);
    std::vector<Vector> shat(t.size());
    shat[t.root] = s;
    for (std::size_t n : order) {
      const BinaryNode& node = t.nodes[n];
      Vector p = shat[n];
      if (node.lateral || node.successor) {
        auto [sx, sc] = split(m, MergeType::ParentChild, shat[n]);
        p = sx;
        if (node.lateral && node.successor) {
          auto [a, b] = split(m, MergeType::Sibling, sc);
          shat[*node.lateral] = a;
          shat[*node.successor] = b;
        } else {
          shat[node.lateral ? *node.lateral : *node.successor] = sc;
        }
      }
      const Vector xhat = m.node_dec[kind_index(node.kind)].forward(p);
      se += (xhat - m.scaler.scale(node.kind, node.params)).squaredNorm();
      dims += node.params.size();
    }
  }
  st.topology_accuracy = static_cast<double>(correct) / static_cast<double>(trees.size());
  st.scaled_mse = se / static_cast<double>(dims);
  st.loss /= static_cast<double>(trees.size());
  return st;
}

namespace {

std::vector<num::ParamView> node_views(RvnnModel& m) {
  std::vector<num::ParamView> v;
  for (NodeKind k : kAllNodeKinds) {
    const std::string name(node_kind_name(k));
    m.node_enc[kind_index(k)].append_params("node_enc." + name, v);
    m.node_dec[kind_index(k)].append_params("node_dec." + name, v);
  }
  return v;
}

void scale_grads(std::vector<num::ParamView>& grads, double factor) {
  for (auto& g : grads) {
    for (double& v : g.values) v *= factor;
  }
}

void clip_grads(std::vector<num::ParamView>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) scale_grads(grads, max_norm / norm);
}

}  // namespace

double pretrain_node_autoencoders(RvnnModel& m, const std::vector<AxialBinaryTree>& trees, int epochs,
                                  std::size_t batch, const num::AdamConfig& adam_cfg, num::Rng& rng) {
  if (!m.scaler.fitted()) throw std::invalid_argument("pretrain_node_autoencoders: scaler not fitted");
  if (batch == 0) throw std::invalid_argument("pretrain_node_autoencoders: batch size must be >= 1");
  std::vector<std::pair<std::size_t, Vector>> samples;
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) samples.emplace_back(kind_index(n.kind), m.scaler.scale(n.kind, n.params));
  }
  if (samples.empty()) return 0.0;
  RvnnModel grad(m.config);
  auto params = node_views(m);
  auto grads = node_views(grad);
  num::Adam adam(adam_cfg);
  double mse = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    double se = 0.0;
    std::size_t dims = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
      const std::size_t end = std::min(samples.size(), start + batch);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) {
        const auto& [k, x] = samples[i];
        const Vector h = m.node_enc[k].forward(x);
        const Vector y = m.node_dec[k].forward(h);
        const Vector d = y - x;
        se += d.squaredNorm();
        dims += static_cast<std::size_t>(x.size());
        const Vector dh = m.node_dec[k].backward(h, y, (2.0 / static_cast<double>(x.size())) * d, grad.node_dec[k]);
        m.node_enc[k].backward(x, h, dh, grad.node_enc[k]);
      }
      scale_grads(grads, 1.0 / static_cast<double>(end - start));
      adam.step(params, grads, adam_cfg.lr);
    }
    mse = se / static_cast<double>(dims);
  }
  return mse;
}

RvnnTrainResult train_rvnn(const std::vector<AxialBinaryTree>& train,
                           const std::vector<AxialBinaryTree>& val, const RvnnTrainConfig& cfg,
                           const std::function<void(const RvnnEpochLog&, const RvnnModel&)>& on_epoch) {
  if (train.empty()) throw std::invalid_argument("train_rvnn: empty training set");
  if (cfg.batch == 0) throw std::invalid_argument("train_rvnn: batch size must be >= 1");
  num::Rng rng(cfg.seed);
  RvnnModel model(cfg.model);
  model.init(rng);
  model.scaler.fit(train);
  std::size_t largest = 0;
  for (const auto& t : train) largest = std::max(largest, t.size());
  model.limits.max_nodes = 4 * largest;
  model.limits.max_depth = 64;
  if (cfg.pretrain_epochs > 0) {
    num::AdamConfig pre = cfg.adam;
    pre.decay_every = 0;
    pretrain_node_autoencoders(model, train, cfg.pretrain_epochs, 4 * cfg.batch, pre, rng);
  }

  RvnnModel grad(cfg.model);
  auto params = model.param_views();
  auto grads = grad.param_views();
  num::Adam adam(cfg.adam);
  const auto& selection = val.empty() ? train : val;

  RvnnTrainResult result{model, {}, -1};
  AutoencoderStats best_stats;
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double lr = num::scheduled_lr(cfg.adam, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch);
      grad.set_zero();
      for (std::size_t i = start; i < end; ++i) epoch_loss += loss_total(model, train[idx[i]], &grad).total;
      scale_grads(grads, 1.0 / static_cast<double>(end - start));
      clip_grads(grads, cfg.clip_norm);
      adam.step(params, grads, lr);
    }
    RvnnEpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    log.val = evaluate_autoencoder(model, selection);
    const bool better = result.best_epoch < 0 ||
                        log.val.topology_accuracy > best_stats.topology_accuracy ||
                        (log.val.topology_accuracy == best_stats.topology_accuracy &&
                         log.val.loss < best_stats.loss);
    if (better) {
      result.model = model;
      result.best_epoch = epoch;
      best_stats = log.val;
      log.best = true;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, result.model);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<Tensor> rvnn_tensors(const RvnnModel& m) {
  auto& mm = const_cast<RvnnModel&>(m);
  std::vector<Tensor> out;
  out.push_back(scalar_tensor("config.latent", static_cast<double>(m.config.latent)));
  out.push_back(scalar_tensor("config.hidden", static_cast<double>(m.config.hidden)));
  out.push_back(scalar_tensor("config.w_rec", m.config.weights.rec));
  out.push_back(scalar_tensor("config.w_step", m.config.weights.step));
  out.push_back(scalar_tensor("config.w_split", m.config.weights.split));
  out.push_back(scalar_tensor("config.w_node", m.config.weights.node));
  out.push_back(scalar_tensor("limits.max_nodes", static_cast<double>(m.limits.max_nodes)));
  out.push_back(scalar_tensor("limits.max_depth", static_cast<double>(m.limits.max_depth)));
  for (NodeKind k : kAllNodeKinds) {
    const std::string name(node_kind_name(k));
    const auto& lo = m.scaler.lo[kind_index(k)];
    const auto& hi = m.scaler.hi[kind_index(k)];
    out.push_back({"scaler.lo." + name, {lo.size()}, lo});
    out.push_back({"scaler.hi." + name, {hi.size()}, hi});
  }
  for (const auto& v : mm.param_views()) out.push_back(tensor_from_view(v));
  return out;
}

RvnnModel rvnn_from_tensors(const std::vector<Tensor>& tensors) {
  auto scalar = [&](std::string_view name) {
    const Tensor& t = require_tensor(tensors, name);
    if (t.data.size() != 1) throw CheckpointError("tensor '" + std::string(name) + "' is not a scalar");
    return t.data[0];
  };
  RvnnConfig cfg;
  cfg.latent = static_cast<std::size_t>(scalar("config.latent"));
  cfg.hidden = static_cast<std::size_t>(scalar("config.hidden"));
  cfg.weights = {scalar("config.w_rec"), scalar("config.w_step"), scalar("config.w_split"),
                 scalar("config.w_node")};
  RvnnModel m(cfg);
  m.limits.max_nodes = static_cast<std::size_t>(scalar("limits.max_nodes"));
  m.limits.max_depth = static_cast<std::size_t>(scalar("limits.max_depth"));
  for (NodeKind k : kAllNodeKinds) {
    const std::string name(node_kind_name(k));
    m.scaler.lo[kind_index(k)] = require_tensor(tensors, "scaler.lo." + name).data;
    m.scaler.hi[kind_index(k)] = require_tensor(tensors, "scaler.hi." + name).data;
  }
  if (!m.scaler.fitted()) throw CheckpointError("checkpoint scaler tables have wrong sizes");
  load_into_views(tensors, m.param_views());
  return m;
}

void save_rvnn(const std::filesystem::path& path, const RvnnModel& m) {
  write_checkpoint(path, rvnn_tensors(m));
}

RvnnModel load_rvnn(const std::filesystem::path& path) { return rvnn_from_tensors(read_checkpoint(path)); }

}  // namespace plantrec
