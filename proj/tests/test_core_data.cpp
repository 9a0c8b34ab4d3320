#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "xvseg/errors.hpp"
#include "xvseg/mask_io.hpp"
#include "xvseg/metrics.hpp"
#include "xvseg/rng.hpp"
#include "xvseg/tensor_store.hpp"

using namespace xvseg;
namespace fs = std::filesystem;

namespace {
fs::path tmp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "xvseg_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

MaskGrid block_mask(int h, int w, int y0, int x0, int bh, int bw) {
  MaskGrid m = MaskGrid::zeros(h, w);
  for (int y = y0; y < y0 + bh; ++y)
    for (int x = x0; x < x0 + bw; ++x) m.at(y, x) = 1.0;
  return m;
}

MaskGrid random_mask(Rng& rng, int h, int w, double p = 0.5) {
  MaskGrid m = MaskGrid::zeros(h, w);
  for (double& v : m.v) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return m;
}
}  // namespace

TEST_CASE("iou: identity, disjoint, hand-counted overlap") {
  MaskGrid a = block_mask(4, 4, 0, 0, 2, 2);
  CHECK(iou(a, a) == doctest::Approx(1.0));

  MaskGrid b = block_mask(4, 4, 2, 2, 2, 2);
  CHECK(iou(a, b) == doctest::Approx(0.0));

  // 2x2 at (0,0) vs 2x2 at (1,1): intersection 1, union 7
  MaskGrid c = block_mask(4, 4, 1, 1, 2, 2);
  CHECK(iou(a, c) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou: empty conventions and errors") {
  MaskGrid e1 = MaskGrid::zeros(3, 3), e2 = MaskGrid::zeros(3, 3);
  CHECK(iou(e1, e2) == doctest::Approx(1.0));
  MaskGrid a = block_mask(3, 3, 0, 0, 1, 1);
  CHECK(iou(e1, a) == doctest::Approx(0.0));

  MaskGrid wrong = MaskGrid::zeros(3, 4);
  CHECK_THROWS_AS(iou(a, wrong), ShapeError);
  MaskGrid soft = MaskGrid::zeros(3, 3);
  soft.v[0] = 0.5;
  CHECK_THROWS_AS(iou(a, soft), ValueError);
}

TEST_CASE("iou is symmetric (property)") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    MaskGrid a = random_mask(rng, 6, 6);
    MaskGrid b = random_mask(rng, 6, 6);
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)));
  }
}

TEST_CASE("binarize: threshold conventions and idempotence") {
  MaskGrid m = MaskGrid::zeros(2, 2, false);
  m.v = {0.4, 0.4, 0.4, 0.4};
  m.binary = false;
  MaskGrid b = binarize(m, 0.5);
  CHECK(b.foreground_count() == 0);

  m.v = {0.5, 0.5, 0.5, 0.5};
  b = binarize(m, 0.5);
  CHECK(b.foreground_count() == 4);  // >= convention

  m.v = {0.2, 0.7, 0.2, 0.7};
  b = binarize(m, 0.5);
  CHECK(b.v == std::vector<double>{0, 1, 0, 1});

  Rng rng(3);
  for (int i = 0; i < 30; ++i) {
    MaskGrid r = MaskGrid::zeros(5, 5, false);
    for (double& v : r.v) v = rng.uniform();
    r.binary = false;
    MaskGrid once = binarize(r, 0.5);
    MaskGrid twice = binarize(once, 0.5);
    CHECK(once.v == twice.v);
  }

  CHECK_THROWS_AS(binarize(m, 0.0), ValueError);
  CHECK_THROWS_AS(binarize(m, 1.0), ValueError);
}

TEST_CASE("mask file round trip is lossless (1000 random 8x8 masks)") {
  auto dir = tmp_dir("maskio");
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    MaskGrid m = random_mask(rng, 8, 8, rng.uniform(0.1, 0.9));
    std::string path = (dir / ("m" + std::to_string(i % 8) + ".png")).string();
    write_mask(m, path);
    MaskGrid back = read_mask(path);
    REQUIRE(back.h == 8);
    REQUIRE(back.w == 8);
    CHECK(back.v == m.v);
  }
}

TEST_CASE("checkerboard 70x70 round trip") {
  auto dir = tmp_dir("maskio_cb");
  MaskGrid m = MaskGrid::zeros(70, 70);
  for (int y = 0; y < 70; ++y)
    for (int x = 0; x < 70; ++x) m.at(y, x) = (x + y) % 2;
  std::string path = (dir / "cb.png").string();
  write_mask(m, path);
  CHECK(read_mask(path).v == m.v);
}

TEST_CASE("mask read failures are distinct") {
  auto dir = tmp_dir("maskio_err");
  CHECK_THROWS_AS(read_mask((dir / "missing.png").string()), IoError);

  std::string garbage = (dir / "garbage.png").string();
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "not a png at all";
  }
  CHECK_THROWS_AS(read_mask(garbage), FormatError);

  // A color raster is not a mask.
  std::string color = (dir / "color.png").string();
  write_image(Image::filled(4, 4, 0.2, 0.5, 0.9), color);
  CHECK_THROWS_WITH_AS(read_mask(color), doctest::Contains("non-binary mask"), ValueError);

  // The mask writer refuses non-binary values outright.
  MaskGrid soft = MaskGrid::zeros(2, 2, false);
  soft.v = {0.0, 0.25, 1.0, 1.0};
  soft.binary = false;
  CHECK_THROWS_AS(write_mask(soft, (dir / "soft.png").string()), ValueError);
}

TEST_CASE("image write/read quantizes to 8 bits and stays in range") {
  auto dir = tmp_dir("imageio");
  Image im = Image::filled(6, 6, 0.123, 0.5, 0.987);
  std::string path = (dir / "img.png").string();
  write_image(im, path);
  Image back = read_image(path);
  REQUIRE(back.valid());
  CHECK(back.at(0, 0, 0) == doctest::Approx(std::round(0.123 * 255) / 255.0));
  CHECK(back.at(3, 3, 1) == doctest::Approx(std::round(0.5 * 255) / 255.0));
}

TEST_CASE("RunConfig invariants") {
  RunConfig c = RunConfig::toy();
  CHECK_NOTHROW(c.validate());
  CHECK(c.token_size() == 5);
  CHECK(c.feat_size() == 35);
  CHECK(c.bottleneck_size() == 5);

  RunConfig def;
  CHECK_NOTHROW(def.validate());
  CHECK(def.token_size() == 37);
  CHECK(def.feat_size() == 259);
  CHECK(def.bottleneck_size() == 37);

  RunConfig bad = c;
  bad.image_size = 69;  // not divisible by 14
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.fusion_ratio = 6;  // 35 % 6 != 0
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.k_points = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.refine_iters = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("RunConfig kv round trip") {
  RunConfig c = RunConfig::toy();
  c.seed = 1234567;
  c.lr = 3.25e-5;
  c.use_refinement = false;
  c.tracker = "feature_correlation";
  c.lr_decay_epochs = {2, 5, 7};
  RunConfig back = RunConfig::from_kv(c.to_kv());
  CHECK(back.to_kv() == c.to_kv());
}

TEST_CASE("tensor store round trip preserves bytes and metadata") {
  auto dir = tmp_dir("tstore");
  Rng rng(5);
  std::vector<StoredTensor> ts;
  Tensor a = Tensor::matrix(3, 4);
  for (int i = 0; i < 12; ++i) a.m.data()[i] = rng.normal();
  Tensor g = Tensor::grid(2, 3, 2);
  for (int i = 0; i < 12; ++i) g.m.data()[i] = rng.normal();
  ts.push_back({"alpha", "g1", true, a});
  ts.push_back({"beta", "g2", false, g});
  save_tensor_store(dir.string(), ts);
  auto back = load_tensor_store(dir.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "alpha");
  CHECK(back[0].t.m == a.m);
  CHECK(back[1].trainable == false);
  CHECK(back[1].t.h == 2);
  CHECK(back[1].t.w == 3);
  CHECK(back[1].t.m == g.m);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  Rng c = Rng(7).derive(1), d = Rng(7).derive(2);
  CHECK(c.uniform() != d.uniform());
  // derivation ignores consumed state
  Rng e(7);
  e.uniform();
  CHECK(e.derive(1).uniform() == Rng(7).derive(1).uniform());
}
