// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// implicit_forge: dataset generation, two-stage training, reconstruction,
// rendering and evaluation.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iforge/errors.hpp"
#include "iforge/eval.hpp"
#include "iforge/field.hpp"
#include "iforge/image_io.hpp"
#include "iforge/parallel.hpp"
#include "iforge/surface.hpp"
#include "iforge/synth.hpp"
#include "iforge/train.hpp"

namespace fs = std::filesystem;
using namespace iforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for bad user input discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON config file");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--set", c.overrides, "KEY=VALUE config override (repeatable)");
}

train::TrainingConfig resolve_config(const Common& c) {
  train::TrainingConfig cfg;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw UsageError("config file '" + c.config + "' does not exist");
    cfg = train::load_config(c.config);
  }
  for (const auto& o : c.overrides) train::apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void prepare_out(const std::string& dir, const train::TrainingConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  std::ofstream out(fs::path(dir) / "run_config.json", std::ios::binary);
  if (!out) throw IoError("cannot write '" + dir + "/run_config.json'");
  out << train::to_json(cfg).dump(2) << "\n";
}

void print_header(const char* what, const train::TrainingConfig& cfg) {
  std::printf("[%s] seed=%llu stage1_epochs=%d stage1_lr=%g stage2_epochs=%d stage2_lr=%g "
              "stage1_iterations=%d stage2_iterations=%d lambda_mv=%g image_size=%d grid_res=%d threads=%d\n",
              what, static_cast<unsigned long long>(cfg.seed), cfg.stage1_epochs, cfg.stage1_lr,
              cfg.stage2_epochs, cfg.stage2_lr, cfg.stage1_iterations, cfg.stage2_iterations, cfg.lambda_mv,
              cfg.image_size, cfg.grid_res, thread_count());
  std::fflush(stdout);
}

void require_dir(const std::string& dir, const char* what) {
  if (dir.empty() || !fs::is_directory(dir)) throw UsageError(std::string(what) + " '" + dir + "' is not a directory");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty() || !fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

// Synthetic held-out samples for a dataset root, or masked pairs for a real directory.
std::vector<synth::TrainingSample> load_eval_set(const std::string& dir, const train::TrainingConfig& cfg) {
  require_dir(dir, "data directory");
  if (fs::exists(fs::path(dir) / "shapes.json")) {
    const synth::Manifest m = synth::read_manifest(dir);
    std::vector<synth::TrainingSample> out;
    for (std::size_t id : cfg.heldout_ids) {
      if (id >= m.shapes.size()) throw UsageError("held-out id " + std::to_string(id) + " is not in the dataset");
      out.push_back(synth::load_sample(dir, id));
    }
    return out;
  }
  return synth::load_real_dir(dir);
}

std::vector<synth::TrainingSample> load_real_set(const std::string& dir) {
  require_dir(dir, "data directory");
  const fs::path real = fs::exists(fs::path(dir) / "shapes.json") ? fs::path(dir) / "real" : fs::path(dir);
  require_dir(real.string(), "real image directory");
  return synth::load_real_dir(real);
}

ImageRGBA load_input(const std::string& image, const std::string& mask) {
  require_file(image, "image");
  if (mask.empty()) return load_image(image);
  require_file(mask, "mask");
  return synth::load_real_sample(image, mask).input;
}

void log_progress(const train::StepInfo& s, int total) {
  const int every = std::max(1, total / 20);
  if (s.step % every == 0 || s.step + 1 == total) {
    std::printf("step %d/%d epoch %d loss_occ=%.6f loss_mv=%.6f total=%.6f points=%zu\n", s.step + 1, total,
                s.epoch, s.loss_occ, s.loss_mv, s.total, s.points);
    std::fflush(stdout);
  }
}

constexpr const char* kViewNames[3] = {"view_0.png", "view_90.png", "view_180.png"};

void save_views(const std::array<render::RenderedView, 3>& views, const fs::path& dir) {
  for (int v = 0; v < 3; ++v) save_image(views[v].image, dir / kViewNames[v]);
}

void save_predicted_views(const field::FieldParams& params, const ImageRGBA& input,
                          const train::TrainingConfig& cfg, const fs::path& dir) {
  const auto az = render::fixed_view_azimuths();
  for (int v = 0; v < 3; ++v) {
    const Camera cam = camera_for_azimuth(az[v], input.width, input.height, cfg.ortho_scale);
    save_image(train::render_prediction(params, input, cam, cfg).image, dir / kViewNames[v]);
  }
}

// --- subcommands -----------------------------------------------------------

int cmd_gen_data(const Common& c) {
  train::TrainingConfig cfg = resolve_config(c);
  if (c.seed) cfg.data_seed = *c.seed;
  prepare_out(c.out, cfg);
  print_header("gen-data", cfg);
  synth::write_dataset(cfg.dataset_spec(), c.out);
  std::printf("wrote %zu shapes to %s\n", cfg.catalog_size, c.out.c_str());
  return kExitOk;
}

int cmd_train_stage1(const Common& c, const std::string& data) {
  const train::TrainingConfig cfg = resolve_config(c);
  require_dir(data, "data directory");
  const synth::Manifest m = synth::read_manifest(data);
  std::vector<synth::TrainingSample> samples;
  for (std::size_t id : cfg.train_ids) {
    if (id >= m.shapes.size()) throw UsageError("train id " + std::to_string(id) + " is not in the dataset");
    samples.push_back(synth::load_sample(data, id));
  }
  prepare_out(c.out, cfg);
  print_header("train-stage1", cfg);
  const int total = train::stage1_steps(cfg, samples.size());
  const train::TrainResult r =
      train::train_stage1(samples, cfg, [&](const train::StepInfo& s) { log_progress(s, total); });
  field::save_checkpoint(r.params, fs::path(c.out) / "checkpoint.bin");
  train::write_metrics_csv(r.log, fs::path(c.out) / "metrics.csv");
  std::printf("checkpoint: %s\n", (fs::path(c.out) / "checkpoint.bin").c_str());
  return kExitOk;
}

int cmd_train_stage2(const Common& c, const std::string& data, const std::string& init) {
  if (init.empty()) throw UsageError("train-stage2 needs --init CHECKPOINT from a stage-1 run");
  require_file(init, "checkpoint");
  const train::TrainingConfig cfg = resolve_config(c);
  const field::FieldParams params = field::load_checkpoint(init);
  const auto samples = load_real_set(data);
  if (samples.empty()) throw UsageError("no image/mask pairs found under '" + data + "'");
  prepare_out(c.out, cfg);
  print_header("train-stage2", cfg);
  const int total = train::stage2_steps(cfg, samples.size());
  const train::TrainResult r =
      train::train_stage2(params, samples, cfg, [&](const train::StepInfo& s) { log_progress(s, total); });
  field::save_checkpoint(r.params, fs::path(c.out) / "checkpoint.bin");
  train::write_metrics_csv(r.log, fs::path(c.out) / "metrics.csv");
  std::printf("checkpoint: %s\n", (fs::path(c.out) / "checkpoint.bin").c_str());
  return kExitOk;
}

int cmd_reconstruct(const Common& c, const std::string& checkpoint, const std::string& image,
                    const std::string& mask) {
  require_file(checkpoint, "checkpoint");
  const train::TrainingConfig cfg = resolve_config(c);
  const field::FieldParams params = field::load_checkpoint(checkpoint);
  const ImageRGBA input = load_input(image, mask);
  if (input.width != cfg.image_size || input.height != cfg.image_size)
    throw UsageError("image is " + std::to_string(input.width) + "x" + std::to_string(input.height) +
                     ", config expects " + std::to_string(cfg.image_size));
  prepare_out(c.out, cfg);
  ad::NoGradGuard guard;
  const field::FeatureGrid grid = field::encode_image(params, input, cfg.ortho_scale);
  const Mesh mesh = field::reconstruct_mesh(params, grid, cfg.mesh_res, cfg.threshold);
  surface::export_obj(mesh, fs::path(c.out) / "mesh.obj");
  if (mesh.triangles.size() < 10)
    std::fprintf(stderr, "warning: reconstruction is empty or nearly empty (%zu triangles)\n", mesh.triangles.size());
  save_predicted_views(params, input, cfg, c.out);
  std::printf("mesh: %zu vertices, %zu triangles\n", mesh.vertices.size(), mesh.triangles.size());
  return kExitOk;
}

int cmd_render_views(const Common& c, const std::string& checkpoint, const std::string& image,
                     const std::string& mask, const std::string& data, std::optional<std::size_t> shape) {
  const train::TrainingConfig cfg = resolve_config(c);
  if (shape) {
    require_dir(data, "data directory");
    const synth::Manifest m = synth::read_manifest(data);
    if (*shape >= m.shapes.size()) throw UsageError("shape " + std::to_string(*shape) + " is not in the dataset");
    prepare_out(c.out, cfg);
    const PointCloud cloud = synth::surface_cloud(m.shapes[*shape]);
    const Camera cam = camera_for_azimuth(0.0, cfg.image_size, cfg.image_size, cfg.ortho_scale);
    save_views(render::render_fixed_views(cloud, cfg.image_size, render::splat_config_for(cloud.radius, cam),
                                          cfg.ortho_scale),
               c.out);
    return kExitOk;
  }
  if (checkpoint.empty() || image.empty())
    throw UsageError("render-views needs --checkpoint and --image, or --data and --shape");
  require_file(checkpoint, "checkpoint");
  const field::FieldParams params = field::load_checkpoint(checkpoint);
  const ImageRGBA input = load_input(image, mask);
  prepare_out(c.out, cfg);
  save_predicted_views(params, input, cfg, c.out);
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data, bool ground_truth) {
  const train::TrainingConfig cfg = resolve_config(c);
  if (!ground_truth) require_file(checkpoint, "checkpoint");
  const auto samples = load_eval_set(data, cfg);
  if (samples.empty()) throw UsageError("evaluation set under '" + data + "' is empty");
  prepare_out(c.out, cfg);
  const eval::EvalReport report = ground_truth
                                      ? eval::evaluate_ground_truth(samples, cfg.tau)
                                      : eval::evaluate(field::load_checkpoint(checkpoint), samples, cfg, "ours");
  const std::vector<eval::EvalReport> reports{report};
  eval::write_report_csv(reports, fs::path(c.out) / "report.csv");
  eval::write_samples_csv(report, fs::path(c.out) / "samples.csv");
  std::fputs(eval::format_table(reports).c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads_from_env();
  CLI::App app{"implicit_forge: single-view implicit reconstruction toolkit"};
  app.require_subcommand(1);

  Common gen, s1, s2, rec, rv, ev;
  std::string s1_data, s2_data, s2_init, rec_ck, rec_img, rec_mask, rv_ck, rv_img, rv_mask, rv_data, ev_ck, ev_data;
  std::optional<std::size_t> rv_shape;
  bool ev_gt = false;

  auto* c_gen = app.add_subcommand("gen-data", "generate the procedural dataset");
  add_common(c_gen, gen);

  auto* c_s1 = app.add_subcommand("train-stage1", "supervised training on procedural shapes");
  add_common(c_s1, s1);
  c_s1->add_option("--data", s1_data, "dataset directory")->required();

  auto* c_s2 = app.add_subcommand("train-stage2", "fine-tune on masked images");
  add_common(c_s2, s2);
  c_s2->add_option("--data", s2_data, "dataset root or directory of X.png + X_mask.png pairs")->required();
  c_s2->add_option("--init", s2_init, "stage-1 checkpoint");

  auto* c_rec = app.add_subcommand("reconstruct", "mesh and fixed views from one image");
  add_common(c_rec, rec);
  c_rec->add_option("--checkpoint", rec_ck, "checkpoint")->required();
  c_rec->add_option("--image", rec_img, "input image")->required();
  c_rec->add_option("--mask", rec_mask, "optional silhouette mask");

  auto* c_rv = app.add_subcommand("render-views", "render the fixed views of a prediction or a catalog shape");
  add_common(c_rv, rv);
  c_rv->add_option("--checkpoint", rv_ck, "checkpoint");
  c_rv->add_option("--image", rv_img, "input image");
  c_rv->add_option("--mask", rv_mask, "optional silhouette mask");
  c_rv->add_option("--data", rv_data, "dataset directory (with --shape)");
  c_rv->add_option("--shape", rv_shape, "catalog id to render from its analytic surface");

  auto* c_ev = app.add_subcommand("eval", "mask IoU and texture precision/recall");
  add_common(c_ev, ev);
  c_ev->add_option("--checkpoint", ev_ck, "checkpoint");
  c_ev->add_option("--data", ev_data, "dataset root (held-out ids) or image/mask directory")->required();
  c_ev->add_flag("--ground-truth", ev_gt, "score the ground truth against itself");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_gen->parsed()) return cmd_gen_data(gen);
    if (c_s1->parsed()) return cmd_train_stage1(s1, s1_data);
    if (c_s2->parsed()) return cmd_train_stage2(s2, s2_data, s2_init);
    if (c_rec->parsed()) return cmd_reconstruct(rec, rec_ck, rec_img, rec_mask);
    if (c_rv->parsed()) return cmd_render_views(rv, rv_ck, rv_img, rv_mask, rv_data, rv_shape);
    if (c_ev->parsed()) return cmd_eval(ev, ev_ck, ev_data, ev_gt);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
