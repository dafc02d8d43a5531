#include <doctest.h>

#include <filesystem>

#include "plantrec/procgen.hpp"
#include "plantrec/rvnn.hpp"

using namespace plantrec;

namespace {

const char* kSeedling =
    "S(0.002,0.01,0,137.5)C(45,0.008,0.3)C(45,0.008,0.3)"
    "S(0.0015,0.005,5,137.5)P(0.001,0.0005,50,0.012,0.3)L(0.2,0.013,0.01)";

std::vector<AxialBinaryTree> trees(std::size_t n, std::uint64_t seed = 1) {
  std::vector<AxialBinaryTree> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(to_binary_tree(grow({i % 8, 12.0 + static_cast<double>(i % 8), seed * 1000 + i})));
  }
  return out;
}

RvnnModel random_model(std::uint64_t seed, const std::vector<AxialBinaryTree>& fit) {
  RvnnModel m;
  num::Rng rng(seed);
  m.init(rng);
  m.scaler.fit(fit);
  return m;
}

// A tree with `extra` Stem nodes chained after the seedling's Stem.
AxialBinaryTree chain(std::size_t extra) {
  AxialBinaryTree t = to_binary_tree(parse_lstring(kSeedling));
  std::size_t last = *t[t.root].successor;
  for (std::size_t i = 0; i < extra; ++i) {
    BinaryNode n = t[last];
    n.successor.reset();
    n.lateral.reset();
    t.nodes.push_back(n);
    t[last].successor = t.size() - 1;
    last = t.size() - 1;
  }
  return t;
}

// One parent-child merge per internal node plus one sibling merge per node
// with both children.
std::size_t expected_steps(const AxialBinaryTree& t) {
  std::size_t s = 0;
  for (const auto& n : t.nodes) s += static_cast<std::size_t>(n.lateral || n.successor) + (n.lateral && n.successor);
  return s;
}

}  // namespace

TEST_CASE("node codecs") {
  const auto corpus = trees(40);
  RvnnModel m = random_model(3, corpus);
  const AxialBinaryTree& t = corpus[5];

  for (const auto& n : t.nodes) {
    CHECK(decode_node(m, num::Vector::Random(static_cast<Eigen::Index>(kLatentDim)), n.kind).size() ==
          node_arity(n.kind));
  }
  const num::Vector s = num::Vector::Random(static_cast<Eigen::Index>(kLatentDim));
  CHECK(decode_node(m, s, NodeKind::Branch) == decode_node(m, s, NodeKind::Branch));

  BinaryNode cot;
  for (const auto& n : t.nodes) {
    if (n.kind == NodeKind::Cotyledons) cot = n;
  }
  const num::Vector before = encode_node(m, cot);
  m.node_enc[static_cast<std::size_t>(NodeKind::Stem)].w.array() += 0.5;
  CHECK(encode_node(m, cot) == before);

  RvnnModel z = m;
  z.set_zero();
  z.scaler = m.scaler;
  for (const auto& n : t.nodes) CHECK(encode_node(z, n).isZero(0.0));
  CHECK(merge(z, MergeType::Sibling, s, s).isZero(0.0));
  const auto [a, b] = split(z, MergeType::ParentChild, s);
  CHECK(a.isZero(0.0));
  CHECK(b.isZero(0.0));

  const num::Vector s2 = num::Vector::Random(static_cast<Eigen::Index>(kLatentDim));
  CHECK((merge(m, MergeType::Sibling, s, s2) - merge(m, MergeType::Sibling, s2, s)).norm() > 1e-6);
}

TEST_CASE("encoding schedule") {
  const auto corpus = trees(40);
  const RvnnModel m = random_model(4, corpus);

  AxialBinaryTree single;
  single.nodes.push_back(to_binary_tree(parse_lstring(kSeedling))[0]);
  single.nodes[0].lateral.reset();
  single.nodes[0].successor.reset();
  EncodeTrace tr;
  CHECK(encode_tree(m, single, &tr) == encode_node(m, single[0]));
  CHECK(tr.steps.empty());

  const AxialBinaryTree seedling = to_binary_tree(parse_lstring(kSeedling));
  EncodeTrace st;
  encode_tree(m, seedling, &st);
  REQUIRE(st.steps.size() == 2);
  CHECK(st.steps[0].type == MergeType::Sibling);
  CHECK(st.steps[1].type == MergeType::ParentChild);
  CHECK(st.steps[1].node == seedling.root);

  for (const auto& t : corpus) {
    EncodeTrace trace;
    const num::Vector z = encode_tree(m, t, &trace);
    CHECK(trace.steps.size() == expected_steps(t));
    CHECK(z.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("loss gradients") {
  const auto corpus = trees(20);
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    for (const AxialBinaryTree& t : {to_binary_tree(parse_lstring(kSeedling)), chain(4)}) {
      RvnnModel m = random_model(seed, corpus);
      RvnnModel g(m.config);
      g.set_zero();
      const LossBreakdown lb = loss_total(m, t, &g);
      CHECK(lb.total == doctest::Approx(lb.rec + lb.step + lb.split + lb.node));
      CHECK(lb.total > 0.0);
      auto pv = m.param_views();
      auto gv = g.param_views();
      num::Rng probe(seed);
      CHECK(num::grad_check([&] { return loss_total(m, t).total; }, pv, gv, 1e-5, 6, probe) < 1e-4);
    }
  }
  const LossWeights w;
  CHECK(w.rec == 1.0);
  CHECK(w.step == 1.0);
  CHECK(w.split == 1.0);
  CHECK(w.node == 1.0);
}

TEST_CASE("decoding") {
  const auto corpus = trees(40);
  RvnnModel m = random_model(6, corpus);
  const num::Vector s = encode_tree(m, corpus[0]);
  const DecodeResult a = decode_tree(m, s);
  const DecodeResult b = decode_tree(m, s);
  CHECK(a.tree == b.tree);
  CHECK_NOTHROW(check_tree(a.tree));

  m.clf_split.l2.b(static_cast<Eigen::Index>(SplitDecision::ParentChild)) = 50.0;
  CHECK_THROWS_AS(decode_tree(m, s, DecodeLimits{1, 64}), DecodeBudgetError);
}

TEST_CASE("node auto-encoder pretraining") {
  const auto corpus = trees(64);
  RvnnModel m = random_model(2, corpus);
  num::Rng rng(2);
  num::AdamConfig adam;
  adam.decay_every = 0;
  const double first = pretrain_node_autoencoders(m, corpus, 1, 16, adam, rng);
  const double mse = pretrain_node_autoencoders(m, corpus, 1000, 16, adam, rng);
  CHECK(mse < first);
  CHECK(mse < 1e-3);
}

TEST_CASE("training") {
  const auto train = trees(48);
  const auto val = trees(8, 2);
  RvnnTrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 3;
  const RvnnTrainResult r = train_rvnn(train, val, cfg);
  REQUIRE(r.log.size() == 10);
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].train_loss < r.log[i - 1].train_loss);
  CHECK(r.best_epoch >= 0);

  const auto path = std::filesystem::temp_directory_path() / "plantrec_test_rvnn.ckpt";
  save_rvnn(path, r.model);
  const RvnnModel back = load_rvnn(path);
  CHECK(checkpoint_hash(rvnn_tensors(back)) == checkpoint_hash(rvnn_tensors(r.model)));
  const num::Vector z = encode_tree(r.model, val[0]);
  CHECK(encode_tree(back, val[0]) == z);
  CHECK(decode_tree(back, z).tree == decode_tree(r.model, z).tree);
  std::filesystem::remove(path);
}
