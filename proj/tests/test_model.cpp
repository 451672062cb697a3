#include <chrono>
#include <cmath>
#include <set>

#include "adi/errors.hpp"
#include "adi/model.hpp"
#include "doctest.h"
#include "fd_oracle.hpp"

using namespace adi::model;
using adi::image::AdImage;
using adi::num::Graph;
using adi::num::Matrix;
using adi::num::Rng;
using adi::num::Var;

namespace {

AdImage random_image(const ModelConfig& cfg, std::size_t rows, Rng& rng) {
  AdImage img{Matrix(rows, cfg.image_width()), cfg.blocks(), cfg.kind};
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto& b : img.blocks) {
      double s = 0.0;
      for (std::size_t c = 0; c < b.width; ++c) s += img.data(r, b.offset + c) = rng.uniform() + 0.05;
      for (std::size_t c = 0; c < b.width; ++c) img.data(r, b.offset + c) /= s;
    }
  }
  return img;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

struct Inputs {
  AdImage x;
  Matrix features;
  Matrix ft;
  std::vector<double> mask;
};

Inputs random_inputs(const ModelConfig& cfg, std::size_t rows, std::size_t valid, Rng& rng) {
  Inputs in{random_image(cfg, rows, rng), random_matrix(rows, cfg.feature_channels, rng),
            step_embedding(7, 50, rows), std::vector<double>(rows, 0.0)};
  std::fill(in.mask.begin(), in.mask.begin() + static_cast<std::ptrdiff_t>(valid), 1.0);
  return in;
}

ModelConfig small_config(std::size_t layers = 1) {
  auto cfg = combined_config(5, 4, 8);
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.mlp_hidden = 2;
  return cfg;
}

}  // namespace

TEST_CASE("init_model is deterministic and names three blocks for L=3") {
  auto cfg = combined_config(6, 16, 64);
  Rng a(1), b(1);
  auto pa = init_model(cfg, a);
  auto pb = init_model(cfg, b);
  CHECK(pa.params == pb.params);

  std::set<std::string> blocks;
  for (const auto& p : pa.params) {
    if (p.name.rfind("block", 0) == 0) blocks.insert(p.name.substr(0, p.name.find('.')));
    CHECK(p.value.all_finite());
  }
  CHECK(blocks == std::set<std::string>{"block0", "block1", "block2"});
}

TEST_CASE("Xavier variance of large weight matrices") {
  auto cfg = combined_config(6, 16, 64);
  Rng rng(2);
  auto mp = init_model(cfg, rng);
  std::size_t checked = 0;
  for (const auto& p : mp.params) {
    const bool weight = p.name.find(".w1") != std::string::npos || p.name.find(".w2") != std::string::npos ||
                        p.name.find("attn.q") != std::string::npos;
    if (!weight || p.value.size() < 2000) continue;
    double s2 = 0.0;
    for (double v : p.value.data()) s2 += v * v;
    const double var = s2 / static_cast<double>(p.value.size());
    const double expect = 2.0 / static_cast<double>(p.value.rows() + p.value.cols());
    INFO(p.name);
    CHECK(var == doctest::Approx(expect).epsilon(0.2));
    ++checked;
  }
  CHECK(checked >= 6);
}

TEST_CASE("step_embedding") {
  const Matrix first = step_embedding(0, 50, 4);
  const Matrix last = step_embedding(50, 50, 4);
  for (double v : first.data()) CHECK(v == 0.0);
  for (double v : last.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t t = 1; t <= 50; ++t) CHECK(step_embedding(t, 50, 1)(0, 0) > step_embedding(t - 1, 50, 1)(0, 0));
}

TEST_CASE("forward output is a valid image for arbitrary parameters and is deterministic") {
  auto cfg = small_config(2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto mp = init_model(cfg, rng);
    for (auto& p : mp.params) {
      for (double& v : p.value.data()) v += 0.5 * rng.normal();
    }
    auto in = random_inputs(cfg, 8, 5 + rng.below(4), rng);
    auto out = forward(mp, in.x, in.features, in.ft, in.mask);
    CHECK(adi::image::validate(out, 1e-6).empty());
    CHECK(out == forward(mp, in.x, in.features, in.ft, in.mask));
    for (std::size_t r = 0; r < 8; ++r) {
      if (in.mask[r] != 0.0) continue;
      CHECK(out.data(r, 0) == doctest::Approx(0.2));
      CHECK(out.data(r, 5) == doctest::Approx(0.5));
    }
  }
}

TEST_CASE("padded rows do not influence valid rows") {
  auto cfg = small_config(2);
  Rng rng(4);
  auto mp = init_model(cfg, rng);
  auto in = random_inputs(cfg, 8, 5, rng);
  auto base = forward(mp, in.x, in.features, in.ft, in.mask);

  auto swapped = in;
  for (std::size_t c = 0; c < cfg.image_width(); ++c) std::swap(swapped.x.data(5, c), swapped.x.data(7, c));
  for (std::size_t c = 0; c < cfg.feature_channels; ++c)
    std::swap(swapped.features(5, c), swapped.features(7, c));
  swapped.features(6, 0) = 100.0;
  auto out = forward(mp, swapped.x, swapped.features, swapped.ft, swapped.mask);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < cfg.image_width(); ++c) CHECK(out.data(r, c) == base.data(r, c));
}

TEST_CASE("shorter inputs use the leading positional rows") {
  auto cfg = small_config(1);
  Rng rng(5);
  auto mp = init_model(cfg, rng);
  auto in = random_inputs(cfg, 6, 6, rng);
  CHECK(adi::image::validate(forward(mp, in.x, in.features, in.ft, in.mask), 1e-6).empty());
  auto too_long = random_inputs(cfg, 9, 9, rng);
  CHECK_THROWS_AS(forward(mp, too_long.x, too_long.features, too_long.ft, too_long.mask), adi::ShapeError);
  auto bad = random_inputs(cfg, 6, 6, rng);
  bad.features = Matrix(6, 3);
  CHECK_THROWS_AS(forward(mp, bad.x, bad.features, bad.ft, bad.mask), adi::ShapeError);
}

TEST_CASE("every parameter gradient matches finite differences") {
  auto cfg = small_config(1);
  Rng rng(6);
  auto mp = init_model(cfg, rng);
  for (auto& p : mp.params) {
    for (double& v : p.value.data()) v += 0.1 * rng.normal();
  }
  for (std::size_t valid : {8, 6}) {
    auto in = random_inputs(cfg, 8, valid, rng);
    const auto target = random_image(cfg, 8, rng).data;
    auto build = [&](Graph& g) {
      Var out = forward_graph(g, mp, in.x, in.features, in.ft, in.mask);
      return g.mse(out, g.constant(target), in.mask);
    };
    Graph g;
    auto grads = g.backward(build(g), mp.params);
    auto rep = adi::testing::fd_check(mp.params, grads, [&] {
      Graph f(false);
      return f.value(build(f))(0, 0);
    });
    INFO("valid rows " << valid << ", worst " << rep.worst);
    CHECK(rep.checked == mp.params.scalar_count());
    CHECK(rep.max_rel_error < 1e-3);
  }
}

TEST_CASE("column stage is equivariant to class-column permutations") {
  auto cfg = small_config(1);
  Rng rng(7);
  auto mp = init_model(cfg, rng);
  auto& pos = mp.params.at("block0.col.pos").value;
  pos.fill(0.0);
  auto in = random_inputs(cfg, 8, 8, rng);
  const Matrix x = assemble_input(cfg, in.x, in.features, in.ft, in.mask);
  Matrix xp = x;
  for (std::size_t r = 0; r < 8; ++r) std::swap(xp(r, 1), xp(r, 3));

  Graph g(false);
  const Matrix y = g.value(column_stage(g, mp, 0, g.constant(x), in.mask));
  const Matrix yp = g.value(column_stage(g, mp, 0, g.constant(xp), in.mask));
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const std::size_t src = c == 1 ? 3 : c == 3 ? 1 : c;
      CHECK(yp(r, c) == doctest::Approx(y(r, src)).epsilon(1e-12));
    }
  }
}

TEST_CASE("row stage without attention only mixes neighbouring rows") {
  auto cfg = small_config(1);
  Rng rng(8);
  auto mp = init_model(cfg, rng);
  mp.params.at("block0.row.attn.out").value.fill(0.0);
  mp.params.at("block0.row.attn.out_bias").value.fill(0.0);
  auto in = random_inputs(cfg, 8, 8, rng);
  const Matrix x = assemble_input(cfg, in.x, in.features, in.ft, in.mask);
  for (std::size_t n = 0; n < 8; ++n) {
    Matrix xc = x;
    for (std::size_t c = 0; c < x.cols(); ++c) xc(n, c) += 1.0 + rng.uniform();
    Graph g(false);
    const Matrix y = g.value(row_stage(g, mp, 0, g.constant(x), in.mask));
    const Matrix yc = g.value(row_stage(g, mp, 0, g.constant(xc), in.mask));
    for (std::size_t r = 0; r < 8; ++r) {
      bool same = true;
      for (std::size_t c = 0; c < x.cols(); ++c) same = same && y(r, c) == yc(r, c);
      const bool near = r + 1 >= n && r <= n + 1;
      INFO("changed row " << n << ", row " << r);
      CHECK(same != near);
    }
  }
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), adi::ConfigError);
  cfg = small_config();
  cfg.image_blocks = {1};
  CHECK_THROWS_AS(cfg.validate(), adi::ConfigError);
  CHECK(combined_config(6, 16, 64).token_count() == 6 + 16 + 5);
  CHECK(single_image_config(adi::image::ImageKind::start, 6, 16, 64).image_width() == 2);
}

TEST_CASE("desk-scale timing probe") {
  auto cfg = combined_config(6, 16, 64);
  Rng rng(9);
  auto mp = init_model(cfg, rng);
  auto in = random_inputs(cfg, 64, 60, rng);
  const auto target = random_image(cfg, 64, rng).data;
  const int reps = 5;
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) forward(mp, in.x, in.features, in.ft, in.mask);
  auto t1 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) {
    Graph g;
    auto loss = g.mse(forward_graph(g, mp, in.x, in.features, in.ft, in.mask), g.constant(target), in.mask);
    g.backward(loss, mp.params);
  }
  auto t2 = std::chrono::steady_clock::now();
  const double fwd = std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
  const double both = std::chrono::duration<double, std::milli>(t2 - t1).count() / reps;
  MESSAGE("forward " << fwd << " ms, forward+backward " << both << " ms, params " << mp.params.scalar_count());
  CHECK(fwd > 0.0);
}
