// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>

#include "iforge/errors.hpp"
#include "iforge/ops.hpp"

namespace iforge::train {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainingConfig::validate() const {
  IFORGE_REQUIRE(stage1_epochs >= 1 && stage2_epochs >= 0, "epoch counts must be >= 1 (stage 2: >= 0)");
  IFORGE_REQUIRE(stage1_lr > 0.0 && stage2_lr > 0.0, "learning rates must be positive");
  IFORGE_REQUIRE(stage1_iterations >= 0 && stage2_iterations >= 0, "iteration overrides must be >= 0");
  IFORGE_REQUIRE(lambda_mv >= 0.0, "lambda_mv must be non-negative");
  IFORGE_REQUIRE(batch_size == 1, "only batch_size 1 is supported");
  IFORGE_REQUIRE(image_size >= 8 && image_size % 4 == 0, "image_size must be a multiple of 4, >= 8");
  IFORGE_REQUIRE(grid_res >= 8 && mesh_res >= 8, "grid_res and mesh_res must be >= 8");
  IFORGE_REQUIRE(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
  IFORGE_REQUIRE(ortho_scale > 0.0, "ortho_scale must be positive");
  IFORGE_REQUIRE(tau >= 0.0, "tau must be non-negative");
  IFORGE_REQUIRE(catalog_size >= 1, "catalog_size must be >= 1");
  IFORGE_REQUIRE(n_uniform > 0 && n_surface > 0, "query counts must be positive");
  IFORGE_REQUIRE(noise_sd >= 0.0, "noise_sd must be non-negative");
  IFORGE_REQUIRE(!train_ids.empty(), "train_ids must not be empty");
  for (auto id : train_ids) IFORGE_REQUIRE(id < catalog_size, "train id outside the catalog");
  for (auto id : heldout_ids) IFORGE_REQUIRE(id < catalog_size, "held-out id outside the catalog");
}

synth::DatasetSpec TrainingConfig::dataset_spec() const {
  synth::DatasetSpec s;
  s.catalog_size = catalog_size;
  s.seed = data_seed;
  s.image_size = image_size;
  s.ortho_scale = ortho_scale;
  s.n_uniform = n_uniform;
  s.n_surface = n_surface;
  s.noise_sd = noise_sd;
  s.heldout = heldout_ids;
  return s;
}

json to_json(const TrainingConfig& c) {
  return {{"stage1_epochs", c.stage1_epochs},
          {"stage1_lr", c.stage1_lr},
          {"stage2_epochs", c.stage2_epochs},
          {"stage2_lr", c.stage2_lr},
          {"stage1_iterations", c.stage1_iterations},
          {"stage2_iterations", c.stage2_iterations},
          {"lambda_mv", c.lambda_mv},
          {"batch_size", c.batch_size},
          {"image_size", c.image_size},
          {"grid_res", c.grid_res},
          {"mesh_res", c.mesh_res},
          {"threshold", c.threshold},
          {"ortho_scale", c.ortho_scale},
          {"seed", c.seed},
          {"tau", c.tau},
          {"catalog_size", c.catalog_size},
          {"data_seed", c.data_seed},
          {"n_uniform", c.n_uniform},
          {"n_surface", c.n_surface},
          {"noise_sd", c.noise_sd},
          {"train_ids", c.train_ids},
          {"heldout_ids", c.heldout_ids}};
}

namespace {

template <class T>
void read_int(const json& v, const std::string& key, T& out) {
  if (!v.is_number_integer()) throw ContractError("config key '" + key + "' expects an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
      throw ContractError("config key '" + key + "' must be non-negative");
  }
  out = v.get<T>();
}

void read_double(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) throw ContractError("config key '" + key + "' expects a number");
  out = v.get<double>();
}

void read_ids(const json& v, const std::string& key, std::vector<std::size_t>& out) {
  if (!v.is_array()) throw ContractError("config key '" + key + "' expects an array of ids");
  std::vector<std::size_t> ids;
  for (const auto& e : v) {
    std::size_t id = 0;
    read_int(e, key, id);
    ids.push_back(id);
  }
  out = std::move(ids);
}

void assign_key(TrainingConfig& c, const std::string& key, const json& v) {
  if (key == "stage1_epochs") return read_int(v, key, c.stage1_epochs);
  if (key == "stage1_lr") return read_double(v, key, c.stage1_lr);
  if (key == "stage2_epochs") return read_int(v, key, c.stage2_epochs);
  if (key == "stage2_lr") return read_double(v, key, c.stage2_lr);
  if (key == "stage1_iterations") return read_int(v, key, c.stage1_iterations);
  if (key == "stage2_iterations") return read_int(v, key, c.stage2_iterations);
  if (key == "lambda_mv") return read_double(v, key, c.lambda_mv);
  if (key == "batch_size") return read_int(v, key, c.batch_size);
  if (key == "image_size") return read_int(v, key, c.image_size);
  if (key == "grid_res") return read_int(v, key, c.grid_res);
  if (key == "mesh_res") return read_int(v, key, c.mesh_res);
  if (key == "threshold") return read_double(v, key, c.threshold);
  if (key == "ortho_scale") return read_double(v, key, c.ortho_scale);
  if (key == "seed") return read_int(v, key, c.seed);
  if (key == "tau") return read_double(v, key, c.tau);
  if (key == "catalog_size") return read_int(v, key, c.catalog_size);
  if (key == "data_seed") return read_int(v, key, c.data_seed);
  if (key == "n_uniform") return read_int(v, key, c.n_uniform);
  if (key == "n_surface") return read_int(v, key, c.n_surface);
  if (key == "noise_sd") return read_double(v, key, c.noise_sd);
  if (key == "train_ids") return read_ids(v, key, c.train_ids);
  if (key == "heldout_ids") return read_ids(v, key, c.heldout_ids);
  throw ContractError("unknown config key '" + key + "'");
}

}  // namespace

TrainingConfig config_from_json(const json& j, const TrainingConfig& base) {
  if (!j.is_object()) throw ContractError("config must be a JSON object");
  TrainingConfig c = base;
  for (const auto& [key, value] : j.items()) assign_key(c, key, value);
  c.validate();
  return c;
}

TrainingConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

void apply_override(TrainingConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ContractError("override '" + assignment + "' is not KEY=VALUE");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  TrainingConfig next = cfg;
  assign_key(next, key, value);
  cfg = next;
}

// ---------------------------------------------------------------------------
// Optimizer

void optimizer_step(std::vector<field::NamedParam>& params, AdamState& state, double lr) {
  IFORGE_REQUIRE(lr > 0.0, "learning rate must be positive");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  IFORGE_REQUIRE(state.m.size() == params.size(), "optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    IFORGE_REQUIRE(state.m[i].size() == params[i].tensor.numel(), "optimizer moment shape mismatch for '" + params[i].name + "'");
    for (double g : params[i].tensor.grad())
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + params[i].name + "'");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].tensor.mutable_data();
    const auto grad = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Losses

ad::Tensor loss_multiview(std::span<const ad::Tensor> rendered, std::span<const ImageRGBA> targets) {
  IFORGE_REQUIRE(!rendered.empty(), "loss_multiview needs at least one view");
  IFORGE_REQUIRE(rendered.size() == targets.size(), "loss_multiview: view count mismatch");
  ad::Tensor total;
  std::size_t n = 0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const auto& t = targets[v];
    const ad::Shape want{static_cast<std::size_t>(t.height), static_cast<std::size_t>(t.width), 4};
    IFORGE_REQUIRE(rendered[v].shape() == want, "loss_multiview: view " + std::to_string(v) + " is " +
                                                    ad::shape_str(rendered[v].shape()) + ", target is " +
                                                    ad::shape_str(want));
    const ad::Tensor term = ad::sum(ad::square(rendered[v] - render::to_tensor(t)));
    total = total.defined() ? total + term : term;
    n += rendered[v].numel();
  }
  return ad::scale(total, 1.0 / static_cast<double>(n));
}

ad::Tensor loss_multiview(std::span<const render::RenderedView> rendered, std::span<const ImageRGBA> targets) {
  std::vector<ad::Tensor> pixels;
  for (const auto& r : rendered) pixels.push_back(r.pixels);
  return loss_multiview(pixels, targets);
}

ad::Tensor loss_occupancy(const ad::Tensor& predicted, std::span<const std::uint8_t> labels) {
  IFORGE_REQUIRE(predicted.defined() && predicted.numel() == labels.size() && !labels.empty(),
                 "loss_occupancy: prediction/label count mismatch");
  std::vector<double> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    IFORGE_REQUIRE(labels[i] <= 1, "occupancy labels must be 0 or 1");
    y[i] = labels[i];
  }
  const ad::Tensor p = ad::reshape(predicted, {labels.size()});
  const ad::Tensor yt = ad::Tensor::from_data({labels.size()}, y);
  const ad::Tensor one_minus_y = ad::add_scalar(-yt, 1.0);
  const ad::Tensor one_minus_p = ad::add_scalar(-p, 1.0);
  return -ad::mean(yt * ad::log(p) + one_minus_y * ad::log(one_minus_p));
}

ad::Tensor loss_silhouette(const ad::Tensor& rendered, const ImageRGBA& masked) {
  const std::size_t hw = masked.pixel_count();
  const ad::Shape want{static_cast<std::size_t>(masked.height), static_cast<std::size_t>(masked.width), 4};
  IFORGE_REQUIRE(rendered.shape() == want, "loss_silhouette: render is " + ad::shape_str(rendered.shape()) +
                                               ", image is " + ad::shape_str(want));
  // (P*m - I*m)^2 = m * (P - I)^2 for a binary mask, so both terms become one
  // weighted sum with per-channel means folded into the weights.
  std::vector<double> target(hw * 4), weight(hw * 4);
  for (std::size_t i = 0; i < hw; ++i) {
    const double m = masked.alpha[i] > 0.5 ? 1.0 : 0.0;
    for (int c = 0; c < 3; ++c) {
      target[i * 4 + c] = masked.rgb[i * 3 + c] * m;
      weight[i * 4 + c] = m / static_cast<double>(3 * hw);
    }
    target[i * 4 + 3] = m;
    weight[i * 4 + 3] = 1.0 / static_cast<double>(hw);
  }
  const ad::Tensor t = ad::Tensor::from_data(want, std::move(target));
  const ad::Tensor w = ad::Tensor::from_data(want, std::move(weight));
  return ad::sum(w * ad::square(rendered - t));
}

render::SplatConfig lattice_splat_config(const TrainingConfig& cfg, const Camera& camera) {
  return render::splat_config_for(field::lattice_splat_radius(cfg.grid_res), camera);
}

render::RenderedView render_prediction(const field::FieldParams& params, const ImageRGBA& input,
                                       const Camera& camera, const TrainingConfig& cfg) {
  ad::NoGradGuard guard;
  const field::FeatureGrid grid = field::encode_image(params, input, cfg.ortho_scale);
  const field::FieldCloud fc = field::extract_point_cloud(params, grid, cfg.grid_res, cfg.threshold);
  return render::render(fc.inputs, camera, lattice_splat_config(cfg, camera));
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct EpochAccumulator {
  double occ = 0.0, mv = 0.0, total = 0.0;
  int count = 0;

  void add(const StepInfo& s) {
    occ += s.loss_occ;
    mv += s.loss_mv;
    total += s.total;
    ++count;
  }
  EpochMetrics flush(int epoch) {
    EpochMetrics m{epoch, occ / count, mv / count, total / count};
    *this = {};
    return m;
  }
};

void check_finite(const StepInfo& s, const char* stage) {
  if (!std::isfinite(s.total))
    throw TrainingError(std::string(stage) + " diverged at epoch " + std::to_string(s.epoch) + ", step " +
                        std::to_string(s.step) + " (loss is not finite)");
}

// Views of the extracted cloud from the fixed cameras; background render when empty.
std::array<ad::Tensor, 3> render_views(const field::FieldCloud& fc, const TrainingConfig& cfg) {
  std::array<ad::Tensor, 3> out;
  const auto views = render::render_fixed_views(fc.inputs, field::lattice_splat_radius(cfg.grid_res),
                                                cfg.image_size, {0, 0, 0}, cfg.ortho_scale);
  for (int v = 0; v < 3; ++v) out[v] = views[v].pixels;
  return out;
}

}  // namespace

int stage1_steps(const TrainingConfig& cfg, std::size_t n_samples) {
  return cfg.stage1_iterations > 0 ? cfg.stage1_iterations : cfg.stage1_epochs * static_cast<int>(n_samples);
}

int stage2_steps(const TrainingConfig& cfg, std::size_t n_samples) {
  return cfg.stage2_iterations > 0 ? cfg.stage2_iterations : cfg.stage2_epochs * static_cast<int>(n_samples);
}

TrainResult train_stage1(const std::vector<synth::TrainingSample>& samples, const TrainingConfig& cfg,
                         const StepCallback& on_step) {
  return train_stage1(field::FieldParams::initialize(cfg.seed), samples, cfg, on_step);
}

TrainResult train_stage1(field::FieldParams params, const std::vector<synth::TrainingSample>& samples,
                         const TrainingConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (samples.empty()) throw ContractError("stage 1 needs a non-empty dataset");
  for (const auto& s : samples) {
    IFORGE_REQUIRE(s.views.size() == 3 && !s.queries.empty(), "stage 1 sample '" + s.name + "' lacks views or queries");
    IFORGE_REQUIRE(s.input.width == cfg.image_size && s.input.height == cfg.image_size,
                   "sample '" + s.name + "' does not match image_size");
  }
  params.validate();
  AdamState adam;
  TrainResult result;
  EpochAccumulator acc;
  const int steps = stage1_steps(cfg, samples.size());
  const int per_epoch = static_cast<int>(samples.size());

  std::vector<std::vector<Vec3>> points(samples.size());
  std::vector<std::vector<std::uint8_t>> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (const auto& q : samples[i].queries) {
      points[i].push_back(q.point);
      labels[i].push_back(q.label);
    }

  for (int step = 0; step < steps; ++step) {
    const std::size_t idx = static_cast<std::size_t>(step % per_epoch);
    const auto& sample = samples[idx];
    StepInfo info;
    info.step = step;
    info.epoch = step / per_epoch;

    params.zero_grad();
    const field::FeatureGrid grid = field::encode_image(params, sample.input, cfg.ortho_scale);
    ad::Tensor loss = loss_occupancy(field::predict_occupancy(params, grid, points[idx]), labels[idx]);
    info.loss_occ = loss.item();
    if (cfg.lambda_mv > 0.0) {
      const surface::ScalarGrid occ = field::occupancy_grid(params, grid, cfg.grid_res);
      const field::FieldCloud fc = field::cloud_from_occupancy(params, grid, occ, cfg.threshold);
      info.points = fc.cloud.size();
      const auto views = render_views(fc, cfg);
      const ad::Tensor mv = loss_multiview(views, sample.views);
      info.loss_mv = mv.item();
      loss = loss + ad::scale(mv, cfg.lambda_mv);
    }
    info.total = loss.item();
    check_finite(info, "stage 1");
    ad::backward(loss);
    optimizer_step(params.params(), adam, cfg.stage1_lr);

    acc.add(info);
    if (on_step) on_step(info);
    if ((step + 1) % per_epoch == 0 || step + 1 == steps) result.log.push_back(acc.flush(info.epoch));
  }
  params.zero_grad();
  result.params = std::move(params);
  return result;
}

TrainResult train_stage2(const field::FieldParams& init, const std::vector<synth::TrainingSample>& samples,
                         const TrainingConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (samples.empty()) throw ContractError("stage 2 needs at least one masked image");
  for (const auto& s : samples)
    IFORGE_REQUIRE(s.input.width == cfg.image_size && s.input.height == cfg.image_size,
                   "sample '" + s.name + "' does not match image_size");
  TrainResult result;
  result.params = init.clone();
  auto& params = result.params;
  AdamState adam;
  EpochAccumulator acc;
  const int steps = stage2_steps(cfg, samples.size());
  const int per_epoch = static_cast<int>(samples.size());
  const Camera cam = camera_for_azimuth(0.0, cfg.image_size, cfg.image_size, cfg.ortho_scale);
  const render::SplatConfig splat_cfg = lattice_splat_config(cfg, cam);

  for (int step = 0; step < steps; ++step) {
    const auto& sample = samples[static_cast<std::size_t>(step % per_epoch)];
    StepInfo info;
    info.step = step;
    info.epoch = step / per_epoch;

    params.zero_grad();
    const field::FeatureGrid grid = field::encode_image(params, sample.input, cfg.ortho_scale);
    const field::FieldCloud fc = field::extract_point_cloud(params, grid, cfg.grid_res, cfg.threshold);
    info.points = fc.cloud.size();
    const ad::Tensor loss = loss_silhouette(render::splat(fc.inputs, cam, splat_cfg), sample.input);
    info.loss_mv = loss.item();
    info.total = info.loss_mv;
    check_finite(info, "stage 2");
    if (loss.requires_grad()) ad::backward(loss);
    optimizer_step(params.params(), adam, cfg.stage2_lr);

    acc.add(info);
    if (on_step) on_step(info);
    if ((step + 1) % per_epoch == 0 || step + 1 == steps) result.log.push_back(acc.flush(info.epoch));
  }
  params.zero_grad();
  return result;
}

void write_metrics_csv(const std::vector<EpochMetrics>& log, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "epoch,loss_occ,loss_mv,total\n";
  char buf[160];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", m.epoch, m.loss_occ, m.loss_mv, m.total);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace iforge::train
