// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/eval.hpp"

#include <cstdio>
#include <fstream>

#include "iforge/errors.hpp"
#include "iforge/render.hpp"

namespace iforge::eval {

namespace fs = std::filesystem;

double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  IFORGE_REQUIRE(a.size() == b.size(), "mask_iou: masks have different extents");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

TexturePR texture_pr(const ImageRGBA& rendered, const ImageRGBA& truth, double tau) {
  IFORGE_REQUIRE(rendered.width == truth.width && rendered.height == truth.height,
                 "texture_pr: images have different extents");
  IFORGE_REQUIRE(tau >= 0.0, "texture_pr: tau must be non-negative");
  const double tau2 = tau * tau;
  std::size_t tp = 0, rendered_fg = 0, truth_fg = 0;
  for (std::size_t i = 0; i < rendered.pixel_count(); ++i) {
    const bool r = rendered.alpha[i] > 0.5, t = truth.alpha[i] > 0.5;
    rendered_fg += r;
    truth_fg += t;
    if (!r || !t) continue;
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = rendered.rgb[i * 3 + c] - truth.rgb[i * 3 + c];
      d2 += d * d;
    }
    tp += d2 < tau2;
  }
  auto ratio = [&](std::size_t den) {
    if (den == 0) return rendered_fg == 0 && truth_fg == 0 ? 1.0 : 0.0;
    return static_cast<double>(tp) / static_cast<double>(den);
  };
  return {ratio(rendered_fg), ratio(truth_fg)};
}

SampleScore score(const std::string& name, const ImageRGBA& rendered, const ImageRGBA& truth, double tau) {
  const TexturePR pr = texture_pr(rendered, truth, tau);
  return {name, mask_iou(silhouette(rendered), silhouette(truth)), pr.precision, pr.recall};
}

EvalReport aggregate(const std::string& method, std::vector<SampleScore> samples) {
  if (samples.empty()) throw ContractError("cannot aggregate an empty evaluation set");
  EvalReport r;
  r.method = method;
  for (const auto& s : samples) {
    r.mask_iou += s.mask_iou;
    r.texture_precision += s.texture_precision;
    r.texture_recall += s.texture_recall;
  }
  const double n = static_cast<double>(samples.size());
  r.mask_iou /= n;
  r.texture_precision /= n;
  r.texture_recall /= n;
  r.samples = std::move(samples);
  return r;
}

EvalReport evaluate(const field::FieldParams& params, const std::vector<synth::TrainingSample>& samples,
                    const train::TrainingConfig& cfg, const std::string& method) {
  if (samples.empty()) throw ContractError("evaluation set is empty");
  std::vector<SampleScore> scores;
  for (const auto& s : samples) {
    const Camera cam = camera_for_azimuth(0.0, s.input.width, s.input.height, cfg.ortho_scale);
    const render::RenderedView view = train::render_prediction(params, s.input, cam, cfg);
    scores.push_back(score(s.name, view.image, s.input, cfg.tau));
  }
  return aggregate(method, std::move(scores));
}

EvalReport evaluate_ground_truth(const std::vector<synth::TrainingSample>& samples, double tau) {
  if (samples.empty()) throw ContractError("evaluation set is empty");
  std::vector<SampleScore> scores;
  for (const auto& s : samples) scores.push_back(score(s.name, s.input, s.input, tau));
  return aggregate("ground_truth", std::move(scores));
}

namespace {

std::string row(const std::string& label, double iou, double p, double r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", iou, p, r);
  return label + buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_report_csv(std::span<const EvalReport> reports, const fs::path& path) {
  std::string text = "method,mask_iou,texture_precision,texture_recall\n";
  for (const auto& r : reports) text += row(r.method, r.mask_iou, r.texture_precision, r.texture_recall);
  write_text(path, text);
}

void write_samples_csv(const EvalReport& report, const fs::path& path) {
  std::string text = "sample,mask_iou,texture_precision,texture_recall\n";
  for (const auto& s : report.samples) text += row(s.name, s.mask_iou, s.texture_precision, s.texture_recall);
  write_text(path, text);
}

std::string format_table(std::span<const EvalReport> reports) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %10s %18s %15s\n", "Methods", "Mask IoU", "Texture Precision",
                "Texture Recall");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-16s %10.3f %18.3f %15.3f\n", r.method.c_str(), r.mask_iou,
                  r.texture_precision, r.texture_recall);
    out += buf;
  }
  return out;
}

}  // namespace iforge::eval
