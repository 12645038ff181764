#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sfpp/model.hpp"
#include "support/oracles.hpp"

using namespace sfpp;
using TF = Tensor<float>;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone_channels = {8, 8, 8, 8};
  return cfg;
}

TF random_patch(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1, 1);
  TF p(Shape{3, size, size});
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = u(rng);
  return p;
}

// Template-sized image placed into a zero search canvas at (ox, oy).
TF place(const TF& z, int size, int ox, int oy) {
  TF x(Shape{3, size, size});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < z.dim(1); ++i)
      for (int j = 0; j < z.dim(2); ++j) x(c, oy + i, ox + j) = z(c, i, j);
  return x;
}

// Channel-summed correlation of the cls features.
TF response(const SiamModel<float>& m, const TF& z, const TF& x) {
  const auto fz = m.embed(z, Branch::kTemplate), fx = m.embed(x, Branch::kSearch);
  const TF c = kernels::xcorr_depthwise(fz.cls, fx.cls);
  TF out(Shape{c.dim(1), c.dim(2)});
  for (int ch = 0; ch < c.dim(0); ++ch)
    for (int i = 0; i < c.dim(1); ++i)
      for (int j = 0; j < c.dim(2); ++j) out(i, j) += c(ch, i, j);
  return out;
}

std::pair<int, int> argmax2(const TF& t) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return {int(best) / t.dim(1), int(best) % t.dim(1)};
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
  const ModelConfig cfg;
  const auto a = SiamModel<float>::init(cfg, 5), b = SiamModel<float>::init(cfg, 5), c = SiamModel<float>::init(cfg, 6);
  CHECK(a.parameters() == b.parameters());
  CHECK_FALSE(a.parameters() == c.parameters());
}

TEST_CASE("head layer weights have std 0.01") {
  const auto m = SiamModel<float>::init(ModelConfig{}, 1);
  const TF& w = m.parameters().at("tower_cls.0.weight");
  REQUIRE(w.size() >= 9000);
  const double mean = w.array().cast<double>().mean();
  const double var = (w.array().cast<double>() - mean).square().mean();
  CHECK(std::sqrt(var) == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("score size from shape propagation matches a forward pass") {
  for (int depth = 1; depth <= 3; ++depth)
    for (int crop : {0, 4}) {
      ModelConfig cfg = small_config();
      cfg.head_tower_depth = depth;
      cfg.crop_border = crop;
      if (crop == 4) {
        cfg.template_size = 128;
        cfg.search_size = 256;
      }
      const auto m = SiamModel<float>::init(cfg, 2);
      std::mt19937_64 rng(depth * 10 + crop);
      const auto z = m.embed(random_patch(cfg.template_size, rng), Branch::kTemplate);
      const HeadOutput<float> out = m.forward(z, random_patch(cfg.search_size, rng));
      const int n = cfg.score_size();
      CAPTURE(depth);
      CAPTURE(crop);
      CHECK(out.cls.shape() == Shape{n, n});
      CHECK(out.quality.shape() == Shape{n, n});
      CHECK(out.reg.shape() == Shape{4, n, n});
    }
  CHECK(ModelConfig{}.score_size() == 9);
  ModelConfig bad;
  bad.crop_border = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("template features are smaller than search features and tasks agree") {
  const auto m = SiamModel<float>::init(small_config(), 3);
  std::mt19937_64 rng(1);
  const auto z = m.embed(random_patch(64, rng), Branch::kTemplate);
  const auto x = m.embed(random_patch(128, rng), Branch::kSearch);
  CHECK(z.cls.shape() == Shape{8, 8, 8});
  CHECK(x.cls.shape() == Shape{8, 16, 16});
  CHECK(z.cls.shape() == z.reg.shape());
  CHECK(x.cls.shape() == x.reg.shape());
  CHECK_THROWS_AS(m.embed(random_patch(128, rng), Branch::kTemplate), ShapeError);
}

TEST_CASE("zero input gives zero features under zero-bias init") {
  const auto m = SiamModel<float>::init(small_config(), 4);
  const auto z = m.embed(TF(Shape{3, 64, 64}), Branch::kTemplate);
  CHECK(z.cls.array().abs().maxCoeff() == 0.0f);
  CHECK(z.reg.array().abs().maxCoeff() == 0.0f);
}

TEST_CASE("tower depth changes parameter count, not output shape") {
  ModelConfig a = small_config(), b = small_config();
  a.head_tower_depth = 1;
  b.head_tower_depth = 3;
  const auto ma = SiamModel<float>::init(a, 1), mb = SiamModel<float>::init(b, 1);
  CHECK(ma.score_size() == mb.score_size());
  CHECK(ma.parameters().scalar_count() < mb.parameters().scalar_count());
}

TEST_CASE("perturbing the regression branch leaves cls unchanged") {
  auto m = SiamModel<float>::init(small_config(), 6);
  std::mt19937_64 rng(2);
  const TF z = random_patch(64, rng), x = random_patch(128, rng);
  const HeadOutput<float> before = m.forward(m.embed(z, Branch::kTemplate), x);
  for (auto& [name, t] : m.parameters())
    if (name.rfind("neck_reg", 0) == 0 || name.rfind("tower_reg", 0) == 0 || name.rfind("head.reg", 0) == 0)
      t.array() += 0.05f;
  const HeadOutput<float> after = m.forward(m.embed(z, Branch::kTemplate), x);
  CHECK(before.cls == after.cls);
  CHECK(before.quality == after.quality);
  CHECK_FALSE(before.reg == after.reg);
}

TEST_CASE("both branches share one backbone") {
  auto m = SiamModel<float>::init(small_config(), 7);
  std::mt19937_64 rng(3);
  const TF z = random_patch(64, rng), x = random_patch(128, rng);
  const auto z0 = m.embed(z, Branch::kTemplate), x0 = m.embed(x, Branch::kSearch);
  m.parameters().at("backbone.conv1.weight").array() *= 1.5f;
  CHECK_FALSE(m.embed(z, Branch::kTemplate).cls == z0.cls);
  CHECK_FALSE(m.embed(x, Branch::kSearch).cls == x0.cls);
}

TEST_CASE("self-similarity peaks at the matching cell and moves with the object") {
  const auto m = SiamModel<float>::init(ModelConfig{}, 8);
  std::mt19937_64 rng(4);
  const TF z = random_patch(64, rng);
  CHECK(argmax2(response(m, z, place(z, 128, 32, 32))) == std::pair{4, 4});
  // One stride of motion moves the peak by one cell.
  CHECK(argmax2(response(m, z, place(z, 128, 40, 32))) == std::pair{4, 5});
  CHECK(argmax2(response(m, z, place(z, 128, 32, 24))) == std::pair{3, 4});
  CHECK(argmax2(response(m, z, place(z, 128, 48, 48))) == std::pair{6, 6});
}

TEST_CASE("map_feature_to_image and centered geometry") {
  CHECK(map_feature_to_image(0, 0, 8) == std::pair{4.0, 4.0});
  CHECK(map_feature_to_image(2, 3, 8) == std::pair{20.0, 28.0});
  CHECK(map_feature_to_image(5, 7, 1) == std::pair{5.0, 7.0});
  const ScoreGeometry g = ModelConfig{}.geometry();
  CHECK(g.size == 9);
  CHECK(g.cell_to_pixel(4, 4) == std::pair{64.0, 64.0});
}

TEST_CASE("decode_distances examples") {
  const Tensor<double> raw(Shape{4, 1, 1}, {0.0, std::log(2.0), -1.0, 1.0});
  const Tensor<double> d = decode_distances(raw, 8);
  CHECK(d[0] == 8.0);
  CHECK(d[1] == doctest::Approx(16.0));
  CHECK(d[2] < d[0]);
  CHECK(d[3] > d[1]);
  CHECK(d.array().minCoeff() > 0);
}

TEST_CASE("frozen prefixes bind as constants") {
  const auto m = SiamModel<double>::init(small_config(), 1);
  Tape<double> tape;
  const BoundParams p = m.bind(tape, {"backbone."});
  CHECK_FALSE(tape.requires_grad(p["backbone.conv1.weight"]));
  CHECK(tape.requires_grad(p["head.cls.weight"]));
}
