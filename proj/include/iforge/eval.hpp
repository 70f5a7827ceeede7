// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// 2D evaluation: silhouette IoU and pixel-wise texture precision/recall
// between a rendered prediction and the ground-truth view.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iforge/field.hpp"
#include "iforge/geometry.hpp"
#include "iforge/synth.hpp"
#include "iforge/train.hpp"

namespace iforge::eval {

inline constexpr double kDefaultTau = 0.1;

/// |a and b| / |a or b|; 1.0 when both masks are empty.
double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct TexturePR {
  double precision = 0.0;
  double recall = 0.0;
};

/// A rendered foreground pixel (alpha > 0.5) is a true positive when the truth
/// pixel is foreground too and the RGB distance is below tau.
TexturePR texture_pr(const ImageRGBA& rendered, const ImageRGBA& truth, double tau = kDefaultTau);

struct SampleScore {
  std::string name;
  double mask_iou = 0.0;
  double texture_precision = 0.0;
  double texture_recall = 0.0;
};

struct EvalReport {
  std::string method;
  double mask_iou = 0.0;
  double texture_precision = 0.0;
  double texture_recall = 0.0;
  std::vector<SampleScore> samples;
};

SampleScore score(const std::string& name, const ImageRGBA& rendered, const ImageRGBA& truth, double tau);

/// Aggregates by arithmetic mean in sample order.
EvalReport aggregate(const std::string& method, std::vector<SampleScore> samples);

/// Reconstructs each sample from its input view, renders from the input
/// camera and compares with the input view (whose alpha is the silhouette).
EvalReport evaluate(const field::FieldParams& params, const std::vector<synth::TrainingSample>& samples,
                    const train::TrainingConfig& cfg, const std::string& method = "ours");

/// Every sample compared with itself.
EvalReport evaluate_ground_truth(const std::vector<synth::TrainingSample>& samples,
                                 double tau = kDefaultTau);

/// method,mask_iou,texture_precision,texture_recall
void write_report_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
/// sample,mask_iou,texture_precision,texture_recall
void write_samples_csv(const EvalReport& report, const std::filesystem::path& path);
std::string format_table(std::span<const EvalReport> reports);

}  // namespace iforge::eval
