#include <set>

#include "adi/adimage.hpp"
#include "adi/errors.hpp"
#include "adi/rng.hpp"
#include "doctest.h"

using namespace adi::image;
using adi::num::Matrix;

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

bool is_boundary(const AdImage& img, std::size_t r) { return img.data(r, 0) == 1.0 && img.data(r, 1) == 0.0; }

Annotation random_annotation(adi::num::Rng& rng, std::size_t classes) {
  Annotation a{"v", 5 + rng.below(40), {}};
  const std::size_t count = rng.below(5);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t s = rng.below(a.num_frames);
    const std::size_t e = s + rng.below(a.num_frames - s);
    a.instances.push_back({s, e, static_cast<int>(1 + rng.below(classes - 1))});
  }
  std::sort(a.instances.begin(), a.instances.end(), [](auto& x, auto& y) { return x.start < y.start; });
  return a;
}

}  // namespace

TEST_CASE("encode_ground_truth: single instance") {
  auto gt = encode_ground_truth({"v", 6, {{2, 4, 2}}}, 3);
  for (std::size_t r : {0, 1, 5}) CHECK(argmax_row(gt.action.data, r) == 0);
  for (std::size_t r : {2, 3, 4}) CHECK(argmax_row(gt.action.data, r) == 2);
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(is_boundary(gt.start, r) == (r == 2));
    CHECK(is_boundary(gt.end, r) == (r == 4));
  }
  CHECK(gt.action.kind == ImageKind::action);
  CHECK(gt.start.kind == ImageKind::start);
  CHECK(gt.end.blocks == std::vector<Block>{{0, 2}});
}

TEST_CASE("encode_ground_truth: no instances") {
  auto gt = encode_ground_truth({"v", 4, {}}, 5);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(gt.action.data(r, 0) == 1.0);
    CHECK_FALSE(is_boundary(gt.start, r));
    CHECK_FALSE(is_boundary(gt.end, r));
  }
}

TEST_CASE("encode_ground_truth: two instances") {
  auto gt = encode_ground_truth({"v", 6, {{0, 1, 1}, {3, 5, 2}}}, 3);
  const std::size_t expected[] = {1, 1, 0, 2, 2, 2};
  for (std::size_t r = 0; r < 6; ++r) CHECK(argmax_row(gt.action.data, r) == expected[r]);
  for (std::size_t r = 0; r < 6; ++r) CHECK(is_boundary(gt.start, r) == (r == 0 || r == 3));
  for (std::size_t r = 0; r < 6; ++r) CHECK(is_boundary(gt.end, r) == (r == 1 || r == 5));
}

TEST_CASE("encode_ground_truth: overlap resolves to the later start") {
  auto gt = encode_ground_truth({"v", 8, {{0, 5, 1}, {3, 7, 2}}}, 3);
  const std::size_t expected[] = {1, 1, 1, 2, 2, 2, 2, 2};
  for (std::size_t r = 0; r < 8; ++r) CHECK(argmax_row(gt.action.data, r) == expected[r]);
}

TEST_CASE("encode_ground_truth rejects bad input") {
  CHECK_THROWS_AS(encode_ground_truth({"v", 6, {{2, 6, 1}}}, 3), adi::ValidationError);
  CHECK_THROWS_AS(encode_ground_truth({"v", 6, {{4, 2, 1}}}, 3), adi::ValidationError);
  CHECK_THROWS_AS(encode_ground_truth({"v", 6, {{2, 3, 3}}}, 3), adi::ValidationError);
  CHECK_THROWS_AS(encode_ground_truth({"v", 6, {{2, 3, 0}}}, 3), adi::ValidationError);
  CHECK_THROWS_AS(encode_ground_truth({"v", 6, {}}, 1), adi::ValidationError);
}

TEST_CASE("ground-truth properties over random annotations") {
  adi::num::Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    const std::size_t classes = 2 + rng.below(6);
    auto ann = random_annotation(rng, classes);
    auto gt = encode_ground_truth(ann, classes);
    CHECK(validate(gt.action, 0.0).empty());
    CHECK(validate(gt.start, 0.0).empty());
    CHECK(validate(gt.end, 0.0).empty());
    for (std::size_t r = 0; r < ann.num_frames; ++r) {
      auto row = gt.action.data.row(r);
      CHECK(std::count(row.begin(), row.end(), 1.0) == 1);
    }
    std::set<std::size_t> starts;
    for (const auto& inst : ann.instances) starts.insert(inst.start);
    std::size_t marked = 0;
    for (std::size_t r = 0; r < ann.num_frames; ++r) marked += is_boundary(gt.start, r) ? 1 : 0;
    CHECK(marked == starts.size());
  }
}

TEST_CASE("stitch and unstitch") {
  auto gt = encode_ground_truth({"v", 10, {{1, 3, 4}, {6, 8, 19}}}, 20);
  auto combined = stitch(gt);
  CHECK(combined.width() == 24);
  CHECK(combined.kind == ImageKind::combined);
  CHECK(combined.blocks == std::vector<Block>{{0, 20}, {20, 2}, {22, 2}});
  CHECK(validate(combined, 0.0).empty());

  auto back = unstitch(combined);
  CHECK(back.action == gt.action);
  CHECK(back.start == gt.start);
  CHECK(back.end == gt.end);

  AdImage a{Matrix::from_rows({{1, 0}}), {{0, 2}}, ImageKind::action};
  AdImage s{Matrix::from_rows({{0, 1}}), {{0, 2}}, ImageKind::start};
  AdImage e{Matrix::from_rows({{0, 1}}), {{0, 2}}, ImageKind::end};
  auto tiny = stitch(a, s, e);
  CHECK(tiny.data == Matrix::from_rows({{1, 0, 0, 1, 0, 1}}));
  auto parts = unstitch(tiny);
  CHECK(parts.action.width() == 2);
  CHECK(parts.start.width() == 2);

  AdImage longer{Matrix(2, 2), {{0, 2}}, ImageKind::start};
  CHECK_THROWS_AS(stitch(a, longer, e), adi::ShapeError);
  CHECK_THROWS_AS(unstitch(a), adi::ValidationError);
}

TEST_CASE("validate examples") {
  AdImage bad{Matrix::from_rows({{0.5, 0.6}}), {{0, 2}}, ImageKind::start};
  auto v = validate(bad, 1e-6);
  REQUIRE(v.size() == 1);
  CHECK(v[0].sum == doctest::Approx(1.1));

  auto u = uniform_image(5, ImageKind::combined, layout(ImageKind::combined, 7));
  CHECK(validate(u, 1e-12).empty());
  CHECK(u.data(0, 0) == doctest::Approx(1.0 / 7));
  CHECK(u.data(0, 8) == 0.5);

  AdImage negative{Matrix::from_rows({{1.5, -0.5}}), {{0, 2}}, ImageKind::end};
  CHECK_FALSE(validate(negative, 1e-6).empty());

  AdImage gap{Matrix(1, 3, 0.5), {{0, 2}}, ImageKind::end};
  CHECK_FALSE(validate(gap, 1e-6).empty());
}

TEST_CASE("pgm rendering") {
  AdImage img{Matrix::from_rows({{1, 0}, {0.5, 0.5}}), {{0, 2}}, ImageKind::start};
  const std::string pgm = to_pgm(img);
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(pgm.size() == header.size() + 4);
  CHECK(pgm.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(pgm[header.size()]) == 255);
  CHECK(static_cast<unsigned char>(pgm[header.size() + 1]) == 0);
  CHECK(static_cast<unsigned char>(pgm[header.size() + 2]) == 128);
}
