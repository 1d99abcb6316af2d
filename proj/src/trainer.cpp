#include "depthkit/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "depthkit/loss.hpp"
#include "depthkit/random.hpp"
#include "depthkit/tensor_convert.hpp"

namespace depthkit {
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string join(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ",") + id;
  return out;
}

}  // namespace

// --- ablations -------------------------------------------------------------------

void Ablations::enable(const std::string& name) {
  if (name == "deeper_encoder") deeper_encoder = true;
  else if (name == "half_decoder") half_decoder = true;
  else if (name == "color_aug_off") color_aug_off = true;
  else if (name == "random_init_encoder") random_init_encoder = true;
  else if (name == "no_skip_connections") no_skip_connections = true;
  else
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (expected deeper_encoder, half_decoder, color_aug_off, "
                                "random_init_encoder or no_skip_connections)");
}

std::vector<std::string> Ablations::enabled() const {
  std::vector<std::string> out;
  if (deeper_encoder) out.emplace_back("deeper_encoder");
  if (half_decoder) out.emplace_back("half_decoder");
  if (color_aug_off) out.emplace_back("color_aug_off");
  if (random_init_encoder) out.emplace_back("random_init_encoder");
  if (no_skip_connections) out.emplace_back("no_skip_connections");
  return out;
}

void apply_ablations(const Ablations& a, ModelConfig& model, AugmentPolicy& augment) {
  if (a.deeper_encoder) {
    const auto& name = model.backbone.name;
    BackboneSpec deeper;
    if (name == "densenet169") deeper = BackboneSpec::densenet201();
    else if (name == "tiny") deeper = make_tiny_backbone(model.backbone.width_multiplier, true);
    else throw std::invalid_argument("deeper_encoder: no deeper variant of backbone '" + name + "'");
    // Weights of the shallower backbone do not fit the deeper one.
    model.backbone = deeper;
  }
  if (a.half_decoder) model.decoder_width = model.bridge_channels() / 2;
  if (a.random_init_encoder) {
    model.backbone.pretrained = false;
    model.backbone.weights_uri.clear();
  }
  if (a.no_skip_connections) model.use_skip_connections = false;
  if (a.color_aug_off) augment.channel_permutation_probability = 0.0;
}

// --- train config ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("TrainConfig: adam_epsilon must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (max_iterations < 0) throw std::invalid_argument("TrainConfig: max_iterations must be >= 0");
  if (validation_interval < 1) throw std::invalid_argument("TrainConfig: validation_interval must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: validation_fraction must lie in [0, 1)");
  loss_weights.validate();
  if (ssim_params) ssim_params->validate();
  augment_policy.validate();
}

SsimParams TrainConfig::resolved_ssim(const DatasetProfile& profile) const {
  if (ssim_params) return *ssim_params;
  return SsimParams::for_targets(profile.max_depth_m, profile.d_min, profile.d_max);
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_items() const {
  std::vector<std::pair<std::string, std::string>> items{
      {"train.learning_rate", num(learning_rate)},
      {"train.beta1", num(beta1)},
      {"train.beta2", num(beta2)},
      {"train.adam_epsilon", num(adam_epsilon)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.max_iterations", std::to_string(max_iterations)},
      {"train.validation_interval", std::to_string(validation_interval)},
      {"train.seed", std::to_string(seed)},
      {"train.validation_fraction", num(validation_fraction)},
      {"train.lambda", num(loss_weights.lambda_depth)},
      {"train.ablations", join(ablations.enabled())},
      {"augment.enabled", augment ? "true" : "false"},
      {"augment.flip_probability", num(augment_policy.flip_probability)},
      {"augment.permutation_probability", num(augment_policy.channel_permutation_probability)},
      {"augment.seed", std::to_string(augment_policy.rng_seed)},
  };
  if (ssim_params) {
    items.emplace_back("ssim.window", std::to_string(ssim_params->window));
    items.emplace_back("ssim.dynamic_range", num(ssim_params->dynamic_range));
    items.emplace_back("ssim.k1", num(ssim_params->k1));
    items.emplace_back("ssim.k2", num(ssim_params->k2));
  }
  return items;
}

TrainConfig TrainConfig::from_config(const KeyValueFile& kv) {
  TrainConfig c;
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.adam_epsilon = kv.get_double("train.adam_epsilon", c.adam_epsilon);
  c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
  c.max_iterations = static_cast<int>(kv.get_int("train.max_iterations", c.max_iterations));
  c.validation_interval = static_cast<int>(kv.get_int("train.validation_interval", c.validation_interval));
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 0));
  c.validation_fraction = kv.get_double("train.validation_fraction", c.validation_fraction);
  c.loss_weights.lambda_depth = kv.get_double("train.lambda", c.loss_weights.lambda_depth);
  std::stringstream names(kv.get_string("train.ablations", ""));
  for (std::string name; std::getline(names, name, ',');)
    if (!name.empty()) c.ablations.enable(name);

  c.augment = kv.get_bool("augment.enabled", c.augment);
  c.augment_policy.flip_probability = kv.get_double("augment.flip_probability", 0.5);
  c.augment_policy.channel_permutation_probability = kv.get_double("augment.permutation_probability", 0.25);
  c.augment_policy.rng_seed = static_cast<std::uint64_t>(kv.get_int("augment.seed", 0));

  if (kv.has("ssim.window") || kv.has("ssim.dynamic_range") || kv.has("ssim.k1") || kv.has("ssim.k2")) {
    SsimParams p;
    p.window = static_cast<int>(kv.get_int("ssim.window", p.window));
    p.dynamic_range = kv.get_double("ssim.dynamic_range", p.dynamic_range);
    p.k1 = kv.get_double("ssim.k1", p.k1);
    p.k2 = kv.get_double("ssim.k2", p.k2);
    c.ssim_params = p;
  }
  c.validate();
  return c;
}

TrainingError::TrainingError(const std::string& what, std::int64_t iteration, std::vector<std::string> batch_ids)
    : std::runtime_error(what + " at iteration " + std::to_string(iteration) + " (batch: " + join(batch_ids) + ")"),
      iteration_(iteration),
      batch_ids_(std::move(batch_ids)) {}

std::string format_step(const StepRecord& r) {
  std::ostringstream os;
  os << "iteration=" << r.iteration << " l_depth=" << num(r.depth) << " l_grad=" << num(r.grad)
     << " l_ssim=" << num(r.ssim) << " total=" << num(r.total) << " wall_time=" << std::fixed
     << std::setprecision(3) << r.wall_time;
  return os.str();
}

// --- trainer -------------------------------------------------------------------------------

namespace {

struct Batch {
  torch::Tensor images;
  torch::Tensor targets;
  torch::Tensor mask;  // undefined for dense targets
};

Batch make_batch(const std::vector<const RgbImage*>& images, const std::vector<const TargetMap*>& targets,
                 bool sparse) {
  std::vector<torch::Tensor> x, y, m;
  for (std::size_t i = 0; i < images.size(); ++i) {
    x.push_back(image_to_tensor(*images[i]));
    y.push_back(grid_to_tensor(targets[i]->values));
    if (sparse) m.push_back(mask_to_tensor(targets[i]->valid));
  }
  Batch b{torch::stack(x), torch::stack(y), {}};
  if (sparse) b.mask = torch::stack(m);
  return b;
}

}  // namespace

Trainer::Trainer(DepthNet model, DatasetProfile profile, const std::vector<Sample>& train,
                 const std::vector<Sample>& validation, TrainConfig cfg)
    : model_(std::move(model)), profile_(std::move(profile)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (train.empty()) throw std::invalid_argument("Trainer: empty training set");
  ssim_ = cfg_.resolved_ssim(profile_);
  Rng unused(0);
  for (const auto& s : train) {
    train_.push_back(prepare_training_pair(s, profile_, nullptr, unused));
    train_ids_.push_back(s.id);
  }
  for (const auto& s : validation) validation_.push_back(prepare_training_pair(s, profile_, nullptr, unused));
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(cfg_.learning_rate)
                                .betas({cfg_.beta1, cfg_.beta2})
                                .eps(cfg_.adam_epsilon)
                                .weight_decay(0.0));
  start_ = std::chrono::steady_clock::now();
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t iteration) const {
  const auto n = static_cast<std::uint64_t>(train_.size());
  const auto first = static_cast<std::uint64_t>(iteration - 1) * static_cast<std::uint64_t>(cfg_.batch_size);
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order;
  for (int k = 0; k < cfg_.batch_size; ++k) {
    const std::uint64_t g = first + static_cast<std::uint64_t>(k);
    if (g / n != cached_epoch) {
      cached_epoch = g / n;
      order = epoch_order(n, cfg_.seed, cached_epoch);
    }
    out.push_back(order[g % n]);
  }
  return out;
}

std::vector<std::string> Trainer::batch_ids(std::int64_t iteration) const {
  std::vector<std::string> ids;
  for (auto i : batch_indices(iteration)) ids.push_back(train_ids_[i]);
  return ids;
}

StepRecord Trainer::step() {
  const std::int64_t it = iteration_ + 1;
  const auto indices = batch_indices(it);
  // One augmentation stream per iteration keeps restarts exact without
  // carrying generator state.
  Rng rng(derive_seed(derive_seed(cfg_.seed, cfg_.augment_policy.rng_seed), static_cast<std::uint64_t>(it)));
  std::vector<Augmented> augmented;
  std::vector<const RgbImage*> images;
  std::vector<const TargetMap*> targets;
  augmented.reserve(indices.size());
  for (auto i : indices) {
    if (cfg_.augment) {
      augmented.push_back(apply_policy(train_[i].image, train_[i].target, cfg_.augment_policy, rng));
      images.push_back(&augmented.back().image);
      targets.push_back(&augmented.back().target);
    } else {
      images.push_back(&train_[i].image);
      targets.push_back(&train_[i].target);
    }
  }
  const Batch batch = make_batch(images, targets, profile_.sparse);

  model_->train();
  optimizer_->zero_grad();
  const auto pred = model_->forward(batch.images);
  const LossTerms terms = composite_loss(batch.targets, pred, cfg_.loss_weights, ssim_, batch.mask);
  const double total = terms.total.item<double>();
  if (!std::isfinite(total)) throw TrainingError("non-finite training loss", it, batch_ids(it));
  terms.total.backward();
  optimizer_->step();
  iteration_ = it;

  StepRecord r;
  r.iteration = it;
  r.depth = terms.depth.item<double>();
  r.grad = terms.grad.item<double>();
  r.ssim = terms.ssim.item<double>();
  r.total = total;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  log_.push_back(r);
  return r;
}

double Trainer::mean_loss(const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) return std::nan("");
  torch::NoGradGuard no_grad;
  model_->eval();
  CompensatedSum sum;
  for (std::size_t first = 0; first < pairs.size(); first += static_cast<std::size_t>(cfg_.batch_size)) {
    const std::size_t last = std::min(pairs.size(), first + static_cast<std::size_t>(cfg_.batch_size));
    std::vector<const RgbImage*> images;
    std::vector<const TargetMap*> targets;
    for (std::size_t i = first; i < last; ++i) {
      images.push_back(&pairs[i].image);
      targets.push_back(&pairs[i].target);
    }
    const Batch b = make_batch(images, targets, profile_.sparse);
    const auto terms = composite_loss(b.targets, model_->forward(b.images), cfg_.loss_weights, ssim_, b.mask);
    sum.add(terms.total.item<double>() * static_cast<double>(last - first));
  }
  model_->train();
  return sum.value() / static_cast<double>(pairs.size());
}

double Trainer::validation_loss() { return mean_loss(validation_); }
double Trainer::training_loss() { return mean_loss(train_); }

ValidationRecord Trainer::validate_now() {
  ValidationRecord r{iteration_, training_loss(), validation_loss()};
  curve_.push_back(r);
  return r;
}

void Trainer::run(const std::optional<fs::path>& out_dir, const std::function<void(const StepRecord&)>& on_step) {
  std::ofstream log;
  if (out_dir) {
    fs::create_directories(*out_dir);
    log.open(*out_dir / "train_log.txt", std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + (*out_dir / "train_log.txt").string());
  }
  auto write_curve = [&] {
    if (!out_dir) return;
    std::ofstream csv(*out_dir / "validation.csv");
    csv << "iteration,train_loss,validation_loss\n";
    for (const auto& v : curve_) csv << v.iteration << "," << num(v.train_loss) << "," << num(v.validation_loss) << "\n";
  };
  while (iteration_ < cfg_.max_iterations) {
    const StepRecord r = step();
    if (log) log << format_step(r) << "\n" << std::flush;
    if (on_step) on_step(r);
    if (iteration_ % cfg_.validation_interval == 0 || iteration_ == cfg_.max_iterations) {
      validate_now();
      write_curve();
      if (out_dir) save_checkpoint(*out_dir / "checkpoint");
    }
  }
  if (out_dir && !fs::exists(*out_dir / "checkpoint" / "model.pt")) save_checkpoint(*out_dir / "checkpoint");
}

void Trainer::save_checkpoint(const fs::path& dir) const {
  fs::create_directories(dir);
  torch::save(model_, (dir / "model.pt").string());
  torch::save(*optimizer_, (dir / "optimizer.pt").string());
  std::ofstream state(dir / "state.cfg");
  state << "iteration=" << iteration_ << "\n";
  auto items = model_->config().to_items();
  for (auto& kv : cfg_.to_items()) items.push_back(kv);
  std::ofstream manifest(dir / "manifest.cfg");
  manifest << format_key_values(items);
  profile_.save(dir / "profile.cfg");
  if (!state || !manifest) throw std::runtime_error("cannot write checkpoint in " + dir.string());
}

void Trainer::load_checkpoint(const fs::path& dir) {
  torch::load(model_, (dir / "model.pt").string());
  torch::load(*optimizer_, (dir / "optimizer.pt").string());
  const auto state = KeyValueFile::load(dir / "state.cfg");
  iteration_ = state.get_int("iteration", 0);
  state.reject_unused();
}

std::pair<std::vector<Sample>, std::vector<Sample>> load_training_split(const DatasetProfile& profile,
                                                                        std::uint64_t seed, double fraction) {
  const auto ids = read_manifest(profile.root / "train.txt");
  std::vector<std::string> train_ids, val_ids;
  if (fs::exists(profile.root / "val.txt")) {
    val_ids = read_manifest(profile.root / "val.txt");
    for (const auto& id : ids)
      if (std::find(val_ids.begin(), val_ids.end(), id) == val_ids.end()) train_ids.push_back(id);
  } else if (fraction > 0.0) {
    std::tie(train_ids, val_ids) = split_validation(ids, seed, fraction);
  } else {
    train_ids = ids;
  }
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const auto& id : train_ids) out.first.push_back(load_sample(profile, id));
  for (const auto& id : val_ids) out.second.push_back(load_sample(profile, id));
  return out;
}

DepthNet load_model(const fs::path& dir) {
  auto kv = KeyValueFile::load(dir / "manifest.cfg");
  ModelConfig cfg = ModelConfig::from_config(kv);
  // Trained weights replace whatever the backbone was initialised from.
  cfg.backbone.pretrained = false;
  DepthNet model = build_model(cfg);
  torch::load(model, (dir / "model.pt").string());
  model->eval();
  return model;
}

DatasetProfile load_checkpoint_profile(const fs::path& dir) { return DatasetProfile::load(dir / "profile.cfg"); }

// --- inference ------------------------------------------------------------------------------

DepthMap predict_with_mirror(const TargetPredictor& f, const RgbImage& image, const DatasetProfile& profile) {
  if (image.height() % 32 != 0 || image.width() % 32 != 0)
    throw std::invalid_argument("predict_with_mirror: image " + std::to_string(image.height()) + "x" +
                                std::to_string(image.width()) + " is not divisible by 32");
  torch::Tensor avg;
  {
    torch::NoGradGuard no_grad;
    const auto x = image_to_tensor(image).unsqueeze(0);
    const auto direct = f(x);
    const auto mirrored = f(x.flip({3})).flip({3});
    avg = ((direct + mirrored) * 0.5).to(torch::kFloat64);
  }
  const double m = profile.max_depth_m;
  avg = avg.clamp(m / profile.d_max, m / profile.d_min);
  Grid<double> depth = tensor_to_grid(m / avg);
  return DepthMap::from_values(resize_bilinear(depth, image.height(), image.width()));
}

namespace {

class EvalModeGuard {
 public:
  explicit EvalModeGuard(DepthNet model) : model_(std::move(model)), was_training_(model_->is_training()) {
    model_->eval();
  }
  ~EvalModeGuard() { model_->train(was_training_); }
  EvalModeGuard(const EvalModeGuard&) = delete;
  EvalModeGuard& operator=(const EvalModeGuard&) = delete;

 private:
  DepthNet model_;
  bool was_training_;
};

TargetPredictor as_predictor(DepthNet model) {
  return [model](const torch::Tensor& x) mutable { return model->forward(x); };
}

}  // namespace

DepthMap predict_with_mirror(DepthNet model, const RgbImage& image, const DatasetProfile& profile) {
  const EvalModeGuard guard(model);
  return predict_with_mirror(as_predictor(model), image, profile);
}

MetricReport evaluate_model(const TargetPredictor& f, const DatasetProfile& profile,
                            const std::vector<std::string>& ids, bool scaled, bool qualitative) {
  std::vector<EvalPair> pairs;
  for (const auto& id : ids) {
    Sample s = load_sample(profile, id);
    EvalPair p;
    p.pred = predict_with_mirror(f, s.image, profile);
    if (s.depth.height() != s.image.height()) p.pred = resize_bilinear(p.pred, s.depth.height(), s.depth.width());
    p.gt = std::move(s.depth);
    p.id = id;
    pairs.push_back(std::move(p));
  }
  EvalOptions opts;
  opts.crop = profile.eval_crop;
  opts.median_scaling = scaled;
  opts.qualitative = qualitative;
  return evaluate_pairs(pairs, opts);
}

MetricReport evaluate_model(DepthNet model, const DatasetProfile& profile, const std::vector<std::string>& ids,
                            bool scaled, bool qualitative) {
  const EvalModeGuard guard(model);
  return evaluate_model(as_predictor(model), profile, ids, scaled, qualitative);
}

}  // namespace depthkit
