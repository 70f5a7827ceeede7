// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "iforge/errors.hpp"
#include "iforge/eval.hpp"
#include "iforge/random.hpp"

using namespace iforge;
using namespace iforge::eval;
namespace fs = std::filesystem;

namespace {

ImageRGBA random_image(Rng& rng, int w, int h, double fg_prob, bool quantized) {
  ImageRGBA img(w, h);
  for (auto& v : img.rgb) v = quantized ? std::round(rng.uniform() * 4.0) / 4.0 : rng.uniform();
  for (auto& a : img.alpha) a = rng.uniform() < fg_prob ? 1.0 : 0.0;
  return img;
}

}  // namespace

TEST_CASE("mask iou examples") {
  const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{0, 1, 0, 1}, none(4, 0);
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(a, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.0);
  // pixels (0,0),(0,1) vs (0,1),(1,1) in a 2x2 grid
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(none, none) == 1.0);
  CHECK_THROWS_AS(mask_iou(a, std::vector<std::uint8_t>(5, 0)), ContractError);
}

TEST_CASE("mask iou symmetry and permutation invariance") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::uint8_t> a(256), b(256);
    for (auto& v : a) v = rng.uniform() < 0.4;
    for (auto& v : b) v = rng.uniform() < 0.4;
    CHECK(mask_iou(a, b) == mask_iou(b, a));
    std::vector<std::size_t> perm(256);
    for (std::size_t i = 0; i < 256; ++i) perm[i] = i;
    for (std::size_t i = 255; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    std::vector<std::uint8_t> pa(256), pb(256);
    for (std::size_t i = 0; i < 256; ++i) {
      pa[i] = a[perm[i]];
      pb[i] = b[perm[i]];
    }
    CHECK(mask_iou(pa, pb) == mask_iou(a, b));
  }
}

TEST_CASE("texture precision and recall examples") {
  Rng rng(2);
  const ImageRGBA img = random_image(rng, 8, 8, 0.5, false);
  const TexturePR same = texture_pr(img, img, 0.1);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);

  // rendered fg: 4 px, 3 of them color-match; truth fg: 6 px
  ImageRGBA r(4, 4), t(4, 4);
  for (int i = 0; i < 4; ++i) r.alpha[i] = 1.0;
  for (int i = 0; i < 6; ++i) t.alpha[i] = 1.0;
  r.rgb[3 * 3] = 0.9;  // pixel 3 mismatches
  const TexturePR pr = texture_pr(r, t, 0.1);
  CHECK(pr.precision == 0.75);
  CHECK(pr.recall == 0.5);

  ImageRGBA close = img;
  for (auto& v : close.rgb) v = std::min(1.0, v + 1e-6);
  const TexturePR exact = texture_pr(close, img, 0.0);
  CHECK(exact.precision == 0.0);
  CHECK(texture_pr(img, img, 0.0).precision == 0.0);  // strict < tau

  const ImageRGBA empty(4, 4);
  CHECK(texture_pr(empty, empty, 0.1).precision == 1.0);
  CHECK(texture_pr(empty, t, 0.1).precision == 0.0);
  CHECK(texture_pr(empty, t, 0.1).recall == 0.0);
  CHECK_THROWS_AS(texture_pr(empty, ImageRGBA(4, 5), 0.1), ContractError);
}

TEST_CASE("metrics match brute-force enumeration on 1000 random 16x16 cases") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const ImageRGBA a = random_image(rng, 16, 16, rng.uniform(), true);
    const ImageRGBA b = random_image(rng, 16, 16, rng.uniform(), true);
    int inter = 0, uni = 0, tp = 0, na = 0, nb = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const bool fa = a.alpha[a.index(x, y)] > 0.5, fb = b.alpha[b.index(x, y)] > 0.5;
        inter += fa && fb;
        uni += fa || fb;
        na += fa;
        nb += fb;
        const Vec3 ca = a.color(x, y), cb = b.color(x, y);
        const double d = std::sqrt((ca[0] - cb[0]) * (ca[0] - cb[0]) + (ca[1] - cb[1]) * (ca[1] - cb[1]) +
                                   (ca[2] - cb[2]) * (ca[2] - cb[2]));
        tp += fa && fb && d < 0.3;
      }
    const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
    CHECK(mask_iou(silhouette(a), silhouette(b)) == iou);
    const TexturePR pr = texture_pr(a, b, 0.3);
    const double p = na == 0 ? (nb == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / na;
    const double r = nb == 0 ? (na == 0 ? 1.0 : 0.0) : static_cast<double>(tp) / nb;
    CHECK(pr.precision == p);
    CHECK(pr.recall == r);
    const TexturePR swapped = texture_pr(b, a, 0.3);
    CHECK(swapped.precision == pr.recall);
    CHECK(swapped.recall == pr.precision);
  }
}

TEST_CASE("aggregation is the per-sample mean") {
  Rng rng(4);
  std::vector<SampleScore> s;
  double iou = 0, p = 0, r = 0;
  for (int i = 0; i < 7; ++i) {
    s.push_back({"s" + std::to_string(i), rng.uniform(), rng.uniform(), rng.uniform()});
    iou += s.back().mask_iou;
    p += s.back().texture_precision;
    r += s.back().texture_recall;
  }
  const EvalReport rep = aggregate("m", s);
  CHECK(std::abs(rep.mask_iou - iou / 7) < 1e-12);
  CHECK(std::abs(rep.texture_precision - p / 7) < 1e-12);
  CHECK(std::abs(rep.texture_recall - r / 7) < 1e-12);
  CHECK_THROWS_AS(aggregate("m", {}), ContractError);
}

TEST_CASE("ground truth self evaluation") {
  std::vector<synth::TrainingSample> samples(2);
  Rng rng(5);
  for (auto& s : samples) s.input = random_image(rng, 16, 16, 0.5, false);
  const EvalReport r = evaluate_ground_truth(samples);
  CHECK(r.mask_iou == 1.0);
  CHECK(r.texture_precision == 1.0);
  CHECK(r.texture_recall == 1.0);
  CHECK_THROWS_AS(evaluate_ground_truth({}), ContractError);
  CHECK_THROWS_AS(evaluate(field::FieldParams::initialize(0), {}, train::TrainingConfig{}), ContractError);
}

TEST_CASE("report formats") {
  const auto dir = fs::temp_directory_path() / "iforge_test_eval";
  fs::create_directories(dir);
  const EvalReport r = aggregate("ours", {{"a", 0.5, 0.25, 1.0}});
  const std::vector<EvalReport> reports{r};
  write_report_csv(reports, dir / "report.csv");
  std::ifstream in(dir / "report.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "method,mask_iou,texture_precision,texture_recall");
  CHECK(line == "ours,0.500000,0.250000,1.000000");
  const std::string table = format_table(reports);
  CHECK(table.find("Mask IoU") != std::string::npos);
  CHECK(table.find("Texture Precision") != std::string::npos);
  CHECK(table.find("ours") != std::string::npos);
}
