// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training: supervised occupancy plus multi-view consistency on
// procedural shapes, then silhouette/color fine-tuning on masked images.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iforge/field.hpp"
#include "iforge/render.hpp"
#include "iforge/synth.hpp"

namespace iforge::train {

struct TrainingConfig {
  // Schedule. Epoch = one pass over the training shapes (or real samples).
  int stage1_epochs = 100;
  double stage1_lr = 0.001;
  int stage2_epochs = 50;
  double stage2_lr = 0.0005;
  // Step-count overrides; 0 keeps the epoch schedule.
  int stage1_iterations = 0;
  int stage2_iterations = 0;

  double lambda_mv = 1.0;
  int batch_size = 1;
  int image_size = 64;
  int grid_res = 32;   // training and evaluation lattice
  int mesh_res = 64;   // marching cubes at reconstruction time
  double threshold = 0.5;
  double ortho_scale = kDefaultOrthoScale;
  std::uint64_t seed = 0;
  double tau = 0.1;

  // Dataset
  std::size_t catalog_size = 20;
  std::uint64_t data_seed = 7;
  std::size_t n_uniform = 1000;
  std::size_t n_surface = 3000;
  double noise_sd = 0.05;
  std::vector<std::size_t> train_ids{0, 1, 2};
  std::vector<std::size_t> heldout_ids{3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};

  void validate() const;
  synth::DatasetSpec dataset_spec() const;
};

nlohmann::json to_json(const TrainingConfig& cfg);
/// Rejects unknown keys and wrong types with ContractError.
TrainingConfig config_from_json(const nlohmann::json& j, const TrainingConfig& base = {});
TrainingConfig load_config(const std::filesystem::path& path);
/// "key=value"; the value is parsed as JSON, falling back to a bare string.
/// Types are checked here; cross-field validation is left to the caller so
/// that related keys can be overridden one at a time.
void apply_override(TrainingConfig& cfg, const std::string& assignment);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update with bias correction. A parameter without a gradient is
/// treated as having zero gradient. Non-finite gradients throw TrainingError
/// naming the parameter, before anything is modified.
void optimizer_step(std::vector<field::NamedParam>& params, AdamState& state, double lr);

/// Plain mean of squared differences over every pixel, channel and view.
ad::Tensor loss_multiview(std::span<const ad::Tensor> rendered, std::span<const ImageRGBA> targets);
ad::Tensor loss_multiview(std::span<const render::RenderedView> rendered, std::span<const ImageRGBA> targets);

/// Mean binary cross-entropy; logs are clamped at 1e-7.
ad::Tensor loss_occupancy(const ad::Tensor& predicted, std::span<const std::uint8_t> labels);

/// MSE(alpha, mask) + MSE(rgb * mask, image * mask) against a masked image
/// whose alpha channel is the binary mask.
ad::Tensor loss_silhouette(const ad::Tensor& rendered, const ImageRGBA& masked_image);

render::SplatConfig lattice_splat_config(const TrainingConfig& cfg, const Camera& camera);

/// Prediction for one input view rendered from `camera` (no graph).
render::RenderedView render_prediction(const field::FieldParams& params, const ImageRGBA& input,
                                       const Camera& camera, const TrainingConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double loss_occ = 0.0;
  double loss_mv = 0.0;
  double total = 0.0;
};

struct StepInfo {
  int step = 0;
  int epoch = 0;
  double loss_occ = 0.0;
  double loss_mv = 0.0;
  double total = 0.0;
  std::size_t points = 0;
};

using StepCallback = std::function<void(const StepInfo&)>;

struct TrainResult {
  field::FieldParams params;
  std::vector<EpochMetrics> log;
};

int stage1_steps(const TrainingConfig& cfg, std::size_t n_samples);
int stage2_steps(const TrainingConfig& cfg, std::size_t n_samples);

/// Samples are visited in order, one per step.
TrainResult train_stage1(const std::vector<synth::TrainingSample>& samples, const TrainingConfig& cfg,
                         const StepCallback& on_step = {});
TrainResult train_stage1(field::FieldParams init, const std::vector<synth::TrainingSample>& samples,
                         const TrainingConfig& cfg, const StepCallback& on_step = {});

/// Fine-tunes a copy of `params`. loss_occ is reported as 0 and loss_mv holds
/// the silhouette loss.
TrainResult train_stage2(const field::FieldParams& params, const std::vector<synth::TrainingSample>& samples,
                         const TrainingConfig& cfg, const StepCallback& on_step = {});

void write_metrics_csv(const std::vector<EpochMetrics>& log, const std::filesystem::path& path);

}  // namespace iforge::train
