// depthkit: dataset generation, training, evaluation, prediction and
// gradient checking from one binary.

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "depthkit/config.hpp"
#include "depthkit/data.hpp"
#include "depthkit/loss.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/model.hpp"
#include "depthkit/png_io.hpp"
#include "depthkit/random.hpp"
#include "depthkit/trainer.hpp"

namespace fs = std::filesystem;
using namespace depthkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

// --- make-toy-data -------------------------------------------------------------

struct ToyArgs {
  int n = 8;
  std::string size = "64x64";
  std::uint64_t seed = 1;
  int test_count = 0;
  std::string out;
};

int cmd_make_toy_data(const ToyArgs& a) {
  const Size2 size = parse_size(a.size);
  ToyDatasetOptions opts;
  opts.count = a.n;
  opts.height = size.height;
  opts.width = size.width;
  opts.seed = a.seed;
  opts.test_count = a.test_count;
  make_toy_dataset(opts, a.out);
  std::cout << "wrote " << a.n << " training and " << a.test_count << " test scenes to " << a.out << "\n";
  return kExitOk;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> ablations;
  std::string out;
  int iterations = -1;
  long seed = -1;
  std::string export_encoder;
};

struct Experiment {
  DatasetProfile profile;
  ModelConfig model;
  TrainConfig train;
  fs::path out_dir;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Experiment load_experiment(const fs::path& file) {
  const KeyValueFile kv = KeyValueFile::load(file);
  const fs::path base = file.parent_path();
  Experiment e;

  const auto root = kv.raw("data.root");
  if (!root || root->empty()) throw ConfigError(file.string() + ": missing required key data.root");
  e.profile = DatasetProfile::load(resolve(base, *root));

  e.model = ModelConfig::from_config(kv);
  if (const char* env = std::getenv("DEPTHKIT_WEIGHTS"); env && *env && !kv.has("model.weights")) {
    e.model.backbone.weights_uri = env;
    e.model.backbone.pretrained = kv.get_bool("model.pretrained", true);
  }
  e.train = TrainConfig::from_config(kv);
  e.out_dir = resolve(base, kv.get_string("output.dir", "run"));
  kv.reject_unused();
  return e;
}

int cmd_train(const TrainArgs& a) {
  Experiment e = load_experiment(a.config);
  for (const auto& name : a.ablations) e.train.ablations.enable(name);
  if (a.iterations >= 0) e.train.max_iterations = a.iterations;
  if (a.seed >= 0) e.train.seed = static_cast<std::uint64_t>(a.seed);
  if (!a.out.empty()) e.out_dir = a.out;
  apply_ablations(e.train.ablations, e.model, e.train.augment_policy);
  e.train.validate();
  e.model.validate();

  torch::manual_seed(e.train.seed);
  DepthNet model = build_model(e.model);
  auto [train, val] = load_training_split(e.profile, e.train.seed, e.train.validation_fraction);
  std::cout << "model: " << e.model.backbone.name << ", " << count_parameters(*model) << " parameters; "
            << train.size() << " training / " << val.size() << " validation samples\n";

  fs::create_directories(e.out_dir);
  {
    auto items = e.model.to_items();
    for (auto& kv : e.train.to_items()) items.push_back(kv);
    std::ofstream(e.out_dir / "resolved.cfg") << format_key_values(items);
  }
  Trainer trainer(model, e.profile, train, val, e.train);
  trainer.run(e.out_dir, [](const StepRecord& r) {
    if (r.iteration == 1 || r.iteration % 50 == 0) std::cout << format_step(r) << "\n";
  });
  const auto& curve = trainer.validation_curve();
  if (!curve.empty())
    std::cout << "final train_loss=" << curve.back().train_loss << " validation_loss=" << curve.back().validation_loss
              << "\n";
  std::cout << "checkpoint: " << (e.out_dir / "checkpoint").string() << "\n";
  if (!a.export_encoder.empty()) {
    save_encoder_weights(model, a.export_encoder);
    std::cout << "encoder weights: " << a.export_encoder << "\n";
  }
  return kExitOk;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string pred_dir;
  std::string split = "test";
  std::string out;
  bool scaled = false;
  bool qualitative = false;
};

int cmd_eval(const EvalArgs& a) {
  const DatasetProfile profile = DatasetProfile::load(a.data);
  MetricReport report;
  fs::path stem;
  if (!a.pred_dir.empty()) {
    EvalOptions opts;
    opts.crop = profile.eval_crop;
    opts.median_scaling = a.scaled;
    opts.qualitative = a.qualitative;
    report = evaluate_set(a.data, a.pred_dir, profile, opts);
    stem = fs::path(a.pred_dir) / "report";
  } else {
    if (a.checkpoint.empty()) throw CLI::ValidationError("eval needs --checkpoint or --pred-dir");
    if (!fs::exists(fs::path(a.checkpoint) / "model.pt"))
      throw std::runtime_error("no model.pt in checkpoint " + a.checkpoint);
    DepthNet model = load_model(a.checkpoint);
    const auto ids = read_manifest(profile.root / (a.split + ".txt"));
    report = evaluate_model(model, profile, ids, a.scaled, a.qualitative);
    stem = fs::path(a.checkpoint) / ("report_" + a.split);
  }
  if (!a.out.empty()) stem = a.out;
  write_report(stem, report);
  std::cout << report_to_text(report);
  return kExitOk;
}

// --- predict -------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string out;
  std::string vis;
  bool auto_resize = false;
};

int nearest_multiple_of_32(int v) { return std::max(32, static_cast<int>(std::lround(v / 32.0)) * 32); }

// Piecewise-linear approximation of a perceptual blue-green-yellow map.
std::array<double, 3> colormap(double t) {
  static const std::array<std::array<double, 3>, 5> stops{{
      {0.267, 0.005, 0.329},
      {0.230, 0.322, 0.546},
      {0.128, 0.567, 0.551},
      {0.369, 0.789, 0.383},
      {0.993, 0.906, 0.144},
  }};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<double, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = stops[i][k] * (1.0 - f) + stops[i + 1][k] * f;
  return c;
}

int cmd_predict(const PredictArgs& a) {
  DepthNet model = load_model(a.checkpoint);
  const DatasetProfile profile = load_checkpoint_profile(a.checkpoint);
  const RgbImage image = read_rgb_png(a.image);
  const int h = image.height(), w = image.width();

  DepthMap depth;
  if (a.auto_resize && (h % 32 != 0 || w % 32 != 0)) {
    const RgbImage resized = resize_bilinear(image, nearest_multiple_of_32(h), nearest_multiple_of_32(w));
    depth = resize_bilinear(predict_with_mirror(model, resized, profile), h, w);
  } else {
    depth = predict_with_mirror(model, image, profile);
  }
  write_depth_png(a.out, depth, kPredictionDepthScale);

  const fs::path vis = a.vis.empty() ? fs::path(a.out).replace_extension("").string() + "_vis.png" : a.vis;
  RgbImage colour(h, w);
  const Grid<double> gray = render_grayscale(depth, profile.d_min, profile.d_max);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      // Near is bright.
      const auto rgb = colormap(1.0 - gray(r, c));
      for (int k = 0; k < 3; ++k) colour.at(k, r, c) = rgb[static_cast<std::size_t>(k)];
    }
  write_rgb_png(vis, colour, 8);
  std::cout << "wrote " << a.out << " and " << vis.string() << " (" << h << "x" << w << ")\n";
  return kExitOk;
}

// --- gradcheck -----------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int size = 16;
  double corrupt = 0.0;  // test hook: adds corrupt * sum(yhat) to the forward value only
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  torch::manual_seed(a.seed);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const SsimParams ssim = SsimParams::for_targets(10.0, 0.4, 10.0);
  const LossWeights weights;
  const auto y = 1.0 + 24.0 * torch::rand({a.size, a.size}, opts);
  const auto yhat = (y + 2.0 * torch::randn({a.size, a.size}, opts)).clamp_min(0.5);

  auto corrupted = [&](torch::Tensor loss, const torch::Tensor& p) {
    if (a.corrupt == 0.0) return loss;
    return loss + a.corrupt * (p - p.detach()).sum();
  };
  struct Term {
    const char* name;
    LossFn fn;
    bool depth_kinks;
    bool grad_kinks;
  };
  const std::vector<Term> terms{
      {"l_depth", [&](const auto& t, const auto& p) { return corrupted(l_depth(t, p), p); }, true, false},
      {"l_grad", [&](const auto& t, const auto& p) { return corrupted(l_grad(t, p), p); }, false, true},
      {"l_ssim", [&](const auto& t, const auto& p) { return corrupted(l_ssim(t, p, ssim), p); }, false, false},
      {"composite", [&](const auto& t, const auto& p) { return corrupted(composite_loss(t, p, weights, ssim).total, p); },
       true, true},
  };
  bool ok = true;
  for (const auto& term : terms) {
    GradCheckOptions go;
    go.samples = 0;
    go.seed = a.seed;
    go.depth_kinks = term.depth_kinks;
    go.gradient_kinks = term.grad_kinks;
    const auto r = gradient_check(term.fn, y, yhat, go);
    const bool pass = r.max_relative_error < a.tolerance;
    ok = ok && pass;
    std::cout << std::left << std::setw(10) << term.name << " max_rel_err=" << std::scientific << std::setprecision(6)
              << r.max_relative_error << std::defaultfloat << " checked=" << r.checked << " skipped=" << r.skipped
              << (pass ? " ok" : " FAIL") << "\n";
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthkit: monocular depth estimation toolkit"};
  app.require_subcommand(1);

  ToyArgs toy;
  auto* toy_cmd = app.add_subcommand("make-toy-data", "Generate a procedural toy dataset");
  toy_cmd->add_option("--n", toy.n, "Number of training scenes")->check(CLI::PositiveNumber);
  toy_cmd->add_option("--size", toy.size, "Scene size HxW (multiples of 32)");
  toy_cmd->add_option("--seed", toy.seed, "Generator seed");
  toy_cmd->add_option("--test-count", toy.test_count, "Additional scenes listed in test.txt")
      ->check(CLI::NonNegativeNumber);
  toy_cmd->add_option("--out", toy.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model from an experiment config");
  train_cmd->add_option("config", train.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--ablation", train.ablations,
                        "deeper_encoder | half_decoder | color_aug_off | random_init_encoder | no_skip_connections");
  train_cmd->add_option("--out", train.out, "Output directory (overrides output.dir)");
  train_cmd->add_option("--iterations", train.iterations, "Override train.max_iterations");
  train_cmd->add_option("--seed", train.seed, "Override train.seed");
  train_cmd->add_option("--export-encoder", train.export_encoder,
                        "Also save the trained encoder weights (usable as DEPTHKIT_WEIGHTS)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a prediction directory");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--pred-dir", ev.pred_dir, "Directory of <id>.png predictions (16-bit mm)");
  eval_cmd->add_option("--split", ev.split, "Id list to evaluate (test or train)");
  eval_cmd->add_option("--out", ev.out, "Report path stem (.txt and .json are appended)");
  eval_cmd->add_flag("--scaled", ev.scaled, "Median-scale each prediction");
  eval_cmd->add_flag("--qualitative", ev.qualitative, "Add mSSIM, edge F1 and mean normal error");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Predict depth for one image");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint directory")->required();
  predict_cmd->add_option("--image", pr.image, "Input PNG")->required();
  predict_cmd->add_option("--out", pr.out, "Output 16-bit depth PNG (millimetres)")->required();
  predict_cmd->add_option("--vis", pr.vis, "Colourised visualisation (default <out>_vis.png)");
  predict_cmd->add_flag("--auto-resize", pr.auto_resize, "Resize to the nearest multiple of 32 and back");

  GradcheckArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  grad_cmd->add_option("--seed", gc.seed, "Seed for the random maps");
  grad_cmd->add_option("--size", gc.size, "Map side length")->check(CLI::Range(8, 64));
  grad_cmd->add_option("--corrupt", gc.corrupt, "Test hook: perturb the analytic gradient")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*toy_cmd) return cmd_make_toy_data(toy);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(ev);
    if (*predict_cmd) return cmd_predict(pr);
    if (*grad_cmd) return cmd_gradcheck(gc);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
