#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "plantrec/evaluation.hpp"
#include "plantrec/pcenc.hpp"
#include "plantrec/procgen.hpp"

using namespace plantrec;

namespace {

PcEncConfig small_config() {
  PcEncConfig c;
  c.h1 = 8;
  c.h2 = 16;
  c.width = 32;
  c.head = 16;
  c.latent = 6;
  c.budget = 256;
  return c;
}

PointCloud plant_cloud(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  return sample_points(interpret(grow({seed % 5, 15.0, seed})), n, rng);
}

}  // namespace

TEST_CASE("normalization") {
  const NormalizationTransform t =
      fit_normalization({Vec3(1, 2, 0), Vec3(3, 2, 0)}, {0.5, 1.5});
  CHECK(t.scale == 1.0);
  CHECK((t.translation - Vec3(-2, -2, 0)).norm() == 0.0);
  const Vec3 p(0.123, -4.5, 7.25);
  CHECK((t.invert(t.apply(p)) - p).norm() < 1e-12);
  const NormalizationTransform u{Vec3(0.3, -0.1, 0.02), 13.7};
  CHECK((u.invert(u.apply(p)) - p).norm() < 1e-12);
}

TEST_CASE("encoder is a set function") {
  PcEncoder e(small_config());
  num::Rng rng(1);
  e.init(rng);
  PointCloud p = plant_cloud(3, 600);
  e.norm.scale = 1.0 / cloud_height(p);
  e.norm.translation = -cloud_base(p);

  const num::Vector z = encode_cloud(e, p);
  CHECK(z.size() == 6);
  CHECK(num::all_finite(z));
  CHECK(z.cwiseAbs().maxCoeff() < 1.0);

  PointCloud shuffled = p;
  std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
  CHECK(encode_cloud(e, shuffled) == z);

  PointCloud doubled = p;
  doubled.points.insert(doubled.points.end(), p.points.begin(), p.points.end());
  CHECK(encode_cloud(e, doubled) == z);

  PointCloud tiny;
  tiny.points = {Vec3(0, 0, 0), Vec3(0, 0, 0.01)};
  CHECK(num::all_finite(encode_cloud(e, tiny)));
  CHECK_THROWS_AS(encode_cloud(e, PointCloud{}), std::invalid_argument);
}

TEST_CASE("encoder gradients") {
  PcEncoder e(small_config());
  num::Rng rng(4);
  e.init(rng);
  const num::DenseMatrix x = canonical_input(plant_cloud(2, 300), e.norm, 64, 1);
  const num::Vector target = num::Vector::Random(6) * 0.5;
  PcEncCache cache;
  const num::Vector y = pcenc_forward(e, x, &cache);
  PcEncoder g(e.config);
  g.set_zero();
  pcenc_backward(e, cache, 2.0 * (y - target), g);
  auto pv = e.param_views();
  auto gv = g.param_views();
  num::Rng probe(9);
  CHECK(num::grad_check([&] { return (pcenc_forward(e, x) - target).squaredNorm(); }, pv, gv, 1e-6, 20, probe) <
        1e-4);
}

TEST_CASE("training and checkpoints") {
  std::vector<PcEncSample> train, val;
  for (std::uint64_t i = 0; i < 12; ++i) {
    PcEncSample s;
    s.clean = plant_cloud(i, 400);
    s.target = num::Vector::Constant(6, (i % 5) * 0.2 - 0.4);
    (i < 10 ? train : val).push_back(s);
  }
  std::vector<const PointCloud*> clouds;
  for (const auto& s : train) clouds.push_back(&s.clean);
  PcEncTrainConfig cfg;
  cfg.encoder = small_config();
  cfg.epochs = 6;
  cfg.batch = 4;
  cfg.p_depth = 0.0;
  const auto r = train_pcenc(train, val, fit_cloud_normalization(clouds), 1234, cfg);
  REQUIRE(r.log.size() == 6);
  CHECK(r.log.back().val_loss < r.log.front().val_loss);
  CHECK(r.model.rvnn_hash == 1234);

  const auto path = std::filesystem::temp_directory_path() / "plantrec_test_pcenc.ckpt";
  save_pcenc(path, r.model);
  const PcEncoder back = load_pcenc(path);
  CHECK(checkpoint_hash(pcenc_tensors(back)) == checkpoint_hash(pcenc_tensors(r.model)));
  CHECK(encode_cloud(back, val[0].clean) == encode_cloud(r.model, val[0].clean));
  std::filesystem::remove(path);
}
