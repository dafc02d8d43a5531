#include <doctest.h>

#include <cmath>

#include "plantrec/checkpoint.hpp"
#include "plantrec/numcore.hpp"

using namespace plantrec;
using namespace plantrec::num;

TEST_CASE("xavier bounds and determinism") {
  Rng rng(1);
  const DenseMatrix a = xavier_init(1, 5, rng);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 1);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);

  Rng r2(7);
  const DenseMatrix b = xavier_init(100, 200, r2);
  CHECK(b.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 300.0));

  Rng r3(7);
  CHECK(xavier_init(100, 200, r3) == b);
}

TEST_CASE("mlp forward") {
  MlpBlock z(4, 6, 3);
  z.set_zero();
  CHECK(z.forward(Vector::Random(4)).isZero(0.0));

  MlpBlock id(1, 1, 1);
  id.set_zero();
  id.l1.w(0, 0) = 1.0;
  id.l2.w(0, 0) = 1.0;
  Vector x(1);
  x << 0.5;
  CHECK(id.forward(x)(0) == doctest::Approx(std::tanh(std::tanh(0.5))).epsilon(1e-12));
  CHECK(id.forward(x)(0) == doctest::Approx(0.4319).epsilon(1e-4));

  Rng rng(3);
  MlpBlock r(8, 16, 8);
  r.init(rng);
  const Vector y = r.forward(Vector::Random(8) * 10.0);
  CHECK(y.cwiseAbs().maxCoeff() < 1.0);
}

namespace {

struct BlockGrad {
  MlpBlock block;
  MlpBlock grad;
  std::vector<ParamView> pv, gv;

  explicit BlockGrad(Rng& rng) : block(3, 5, 2), grad(3, 5, 2) {
    block.init(rng);
    grad.set_zero();
    block.append_params("b", pv);
    grad.append_params("b", gv);
  }
};

}  // namespace

TEST_CASE("mlp backward") {
  Rng rng(11);
  BlockGrad bg(rng);
  const Vector x = Vector::Random(3);
  MlpCache cache;
  bg.block.forward(x, &cache);

  SUBCASE("zero upstream gradient") {
    const Vector dx = bg.block.backward(cache, Vector::Zero(2), bg.grad);
    CHECK(dx.isZero(0.0));
    for (const auto& g : bg.gv) {
      for (double v : g.values) CHECK(v == 0.0);
    }
  }

  SUBCASE("linear in the upstream gradient") {
    const Vector dy = Vector::Random(2);
    MlpBlock g2(3, 5, 2);
    g2.set_zero();
    const Vector dx1 = bg.block.backward(cache, dy, bg.grad);
    const Vector dx2 = bg.block.backward(cache, 2.0 * dy, g2);
    CHECK((dx2 - 2.0 * dx1).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((g2.l1.w - 2.0 * bg.grad.l1.w).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((g2.l2.b - 2.0 * bg.grad.l2.b).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("finite differences with mean squared error") {
    const Vector target = Vector::Random(2);
    auto loss = [&] { return (bg.block.forward(x) - target).squaredNorm() / 2.0; };
    MlpCache c;
    const Vector y = bg.block.forward(x, &c);
    bg.block.backward(c, (y - target) / 1.0, bg.grad);
    Rng probe(5);
    CHECK(grad_check(loss, bg.pv, bg.gv, 1e-5, 0, probe) < 1e-4);
  }
}

TEST_CASE("grad_check on a quadratic") {
  std::vector<double> p = {0.3, -1.2, 2.5, 0.0};
  std::vector<double> g = p;
  std::vector<ParamView> pv = {{"p", p, {4}}};
  std::vector<ParamView> gv = {{"p", g, {4}}};
  auto loss = [&] {
    double s = 0;
    for (double v : p) s += v * v;
    return 0.5 * s;
  };
  Rng rng(1);
  CHECK(grad_check(loss, pv, gv, 1e-5, 0, rng) < 1e-8);
  CHECK(p == std::vector<double>{0.3, -1.2, 2.5, 0.0});
}

TEST_CASE("softmax cross entropy") {
  Vector z = Vector::Zero(3);
  CHECK(softmax_cross_entropy(z, 0).loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  Vector l(2);
  l << 10.0, -10.0;
  const CrossEntropy ce = softmax_cross_entropy(l, 0);
  CHECK(ce.loss == doctest::Approx(2.06e-9).epsilon(0.01));
  Vector r = Vector::Random(5) * 4.0;
  CHECK(std::abs(softmax_cross_entropy(r, 2).dlogits.sum()) < 1e-12);
  CHECK(argmax(l) == 0);
}

TEST_CASE("adam") {
  std::vector<double> p = {1.0}, g = {0.0};
  std::vector<ParamView> pv = {{"p", p, {1}}};
  std::vector<ParamView> gv = {{"p", g, {1}}};
  Adam zero;
  zero.step(pv, gv, 1e-3);
  CHECK(p[0] == 1.0);

  Adam adam;
  g[0] = 1.0;
  adam.step(pv, gv, 1e-3);
  CHECK(p[0] - 1.0 == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(adam.steps() == 1);

  const AdamConfig cfg;
  CHECK(scheduled_lr(cfg, 0) == 1e-3);
  CHECK(scheduled_lr(cfg, 49) == 1e-3);
  CHECK(scheduled_lr(cfg, 50) == 5e-4);
  CHECK(scheduled_lr(cfg, 99) == 5e-4);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(2);
  MlpBlock b(3, 4, 2);
  b.init(rng);
  std::vector<ParamView> views;
  b.append_params("mlp", views);
  std::vector<Tensor> tensors;
  for (const auto& v : views) tensors.push_back(tensor_from_view(v));
  tensors.push_back(scalar_tensor("config.x", 2.5));
  tensors.push_back(string_tensor("name", "hello"));

  const auto bytes = encode_checkpoint(tensors);
  const auto back = decode_checkpoint(bytes);
  CHECK(checkpoint_hash(back) == checkpoint_hash(tensors));
  CHECK(require_tensor(back, "config.x").data.at(0) == 2.5);
  CHECK(tensor_string(require_tensor(back, "name")) == "hello");
  CHECK(find_tensor(back, "missing") == nullptr);
  CHECK_THROWS_AS(require_tensor(back, "missing"), CheckpointError);

  MlpBlock c(3, 4, 2);
  c.set_zero();
  std::vector<ParamView> cv;
  c.append_params("mlp", cv);
  load_into_views(back, cv);
  CHECK(c.l1.w == b.l1.w);
  CHECK(c.l2.b == b.l2.b);

  auto bad = bytes;
  bad[0] ^= 0xff;
  CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)}),
                  CheckpointError);
}
