#include "depthkit/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace depthkit {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

// --- backbone specs ------------------------------------------------------------

void BackboneSpec::validate() const {
  for (int c : stage_channels)
    if (c <= 0) throw std::invalid_argument("BackboneSpec '" + name + "': stage channels must be positive");
  if (pretrained && weights_uri.empty())
    throw std::invalid_argument("BackboneSpec '" + name + "': pretrained backbone needs weights_uri");
}

BackboneSpec BackboneSpec::densenet169() {
  BackboneSpec s;
  s.name = "densenet169";
  s.stage_channels = {64, 64, 128, 256, 1664};
  return s;
}

BackboneSpec BackboneSpec::densenet201() {
  BackboneSpec s;
  s.name = "densenet201";
  s.stage_channels = {64, 64, 128, 256, 1920};
  return s;
}

BackboneSpec make_tiny_backbone(double width_multiplier, bool deep) {
  if (!(width_multiplier > 0.0)) throw std::invalid_argument("make_tiny_backbone: multiplier must be positive");
  BackboneSpec s;
  s.name = deep ? "tiny_deep" : "tiny";
  s.width_multiplier = width_multiplier;
  const auto reference = BackboneSpec::densenet169().stage_channels;
  for (std::size_t i = 0; i < reference.size(); ++i)
    s.stage_channels[i] = std::max(1, static_cast<int>(std::lround(reference[i] * width_multiplier)));
  return s;
}

// --- model config ----------------------------------------------------------------

int ModelConfig::bridge_channels() const {
  return decoder_width > 0 ? decoder_width : backbone.stage_channels[4];
}

std::array<int, 4> ModelConfig::decoder_filters() const {
  std::array<int, 4> f{};
  int width = bridge_channels();
  for (auto& v : f) {
    width /= 2;
    v = width;
  }
  return f;
}

void ModelConfig::validate() const {
  backbone.validate();
  if (output_channels != 1) throw std::invalid_argument("ModelConfig: output_channels must be 1");
  if (decoder_width < 0) throw std::invalid_argument("ModelConfig: negative decoder_width");
  if (decoder_filters()[3] < 1) throw std::invalid_argument("ModelConfig: decoder too narrow to halve four times");
  if (!(leaky_relu_alpha >= 0.0)) throw std::invalid_argument("ModelConfig: leaky_relu_alpha must be >= 0");
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_items(const std::string& prefix) const {
  std::ostringstream mult, alpha;
  mult.precision(17);
  alpha.precision(17);
  mult << backbone.width_multiplier;
  alpha << leaky_relu_alpha;
  return {
      {prefix + "backbone", backbone.name},
      {prefix + "width_multiplier", mult.str()},
      {prefix + "pretrained", backbone.pretrained ? "true" : "false"},
      {prefix + "weights", backbone.weights_uri},
      {prefix + "decoder_width", std::to_string(decoder_width)},
      {prefix + "use_skip_connections", use_skip_connections ? "true" : "false"},
      {prefix + "leaky_relu_alpha", alpha.str()},
  };
}

ModelConfig ModelConfig::from_config(const KeyValueFile& kv, const std::string& prefix) {
  ModelConfig cfg;
  const std::string name = kv.get_string(prefix + "backbone", "tiny");
  const double mult = kv.get_double(prefix + "width_multiplier", 1.0 / 16.0);
  if (name == "densenet169") cfg.backbone = BackboneSpec::densenet169();
  else if (name == "densenet201") cfg.backbone = BackboneSpec::densenet201();
  else if (name == "tiny") cfg.backbone = make_tiny_backbone(mult);
  else if (name == "tiny_deep") cfg.backbone = make_tiny_backbone(mult, true);
  else throw ConfigError(kv.origin() + ": unknown backbone '" + name + "'");
  cfg.backbone.weights_uri = kv.get_string(prefix + "weights", "");
  cfg.backbone.pretrained = kv.get_bool(prefix + "pretrained", !cfg.backbone.weights_uri.empty());
  cfg.decoder_width = static_cast<int>(kv.get_int(prefix + "decoder_width", 0));
  cfg.use_skip_connections = kv.get_bool(prefix + "use_skip_connections", true);
  cfg.leaky_relu_alpha = kv.get_double(prefix + "leaky_relu_alpha", 0.2);
  return cfg;
}

// --- encoders --------------------------------------------------------------------

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(bias));
}

class DenseLayerImpl : public nn::Module {
 public:
  DenseLayerImpl(int in, int growth, int bottleneck)
      : norm1_(register_module("norm1", nn::BatchNorm2d(in))),
        conv1_(register_module("conv1", conv(in, bottleneck * growth, 1))),
        norm2_(register_module("norm2", nn::BatchNorm2d(bottleneck * growth))),
        conv2_(register_module("conv2", conv(bottleneck * growth, growth, 3))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = conv1_(torch::relu(norm1_(x)));
    y = conv2_(torch::relu(norm2_(y)));
    return torch::cat({x, y}, 1);
  }

 private:
  nn::BatchNorm2d norm1_;
  nn::Conv2d conv1_;
  nn::BatchNorm2d norm2_;
  nn::Conv2d conv2_;
};
TORCH_MODULE(DenseLayer);

class TransitionImpl : public nn::Module {
 public:
  TransitionImpl(int in, int out)
      : norm_(register_module("norm", nn::BatchNorm2d(in))), conv_(register_module("conv", conv(in, out, 1))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    return F::avg_pool2d(conv_(torch::relu(norm_(x))), F::AvgPool2dFuncOptions(2).stride(2));
  }

 private:
  nn::BatchNorm2d norm_;
  nn::Conv2d conv_;
};
TORCH_MODULE(Transition);

// Densely connected backbone, growth rate 32, 4x bottleneck, 0.5 compression.
class DenseNetEncoderImpl : public EncoderImpl {
 public:
  explicit DenseNetEncoderImpl(const std::vector<int>& block_config) {
    constexpr int growth = 32, bottleneck = 4;
    int channels = 64;
    conv0_ = register_module("conv0", nn::Conv2d(nn::Conv2dOptions(3, channels, 7).stride(2).padding(3).bias(false)));
    norm0_ = register_module("norm0", nn::BatchNorm2d(channels));
    for (std::size_t b = 0; b < block_config.size(); ++b) {
      nn::Sequential block;
      for (int l = 0; l < block_config[b]; ++l) {
        block->push_back(DenseLayer(channels, growth, bottleneck));
        channels += growth;
      }
      blocks_.push_back(register_module("denseblock" + std::to_string(b + 1), block));
      if (b + 1 < block_config.size()) {
        transitions_.push_back(register_module("transition" + std::to_string(b + 1), Transition(channels, channels / 2)));
        channels /= 2;
      }
    }
    norm5_ = register_module("norm5", nn::BatchNorm2d(channels));
  }

  FeaturePyramid encode(const torch::Tensor& x) override {
    FeaturePyramid f;
    auto y = torch::relu(norm0_(conv0_(x)));
    f["CONV1"] = y;
    y = F::max_pool2d(y, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    f["POOL1"] = y;
    y = transitions_[0]->forward(blocks_[0]->forward(y));
    f["POOL2"] = y;
    y = transitions_[1]->forward(blocks_[1]->forward(y));
    f["POOL3"] = y;
    y = transitions_[2]->forward(blocks_[2]->forward(y));
    y = torch::relu(norm5_(blocks_[3]->forward(y)));
    f["BLOCK4"] = y;
    return f;
  }

 private:
  nn::Conv2d conv0_{nullptr};
  nn::BatchNorm2d norm0_{nullptr};
  std::vector<nn::Sequential> blocks_;
  std::vector<Transition> transitions_;
  nn::BatchNorm2d norm5_{nullptr};
};

void add_conv_bn_relu(nn::Sequential& seq, int in, int out, int stride = 1) {
  seq->push_back(conv(in, out, 3, stride));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU());
}

// Desk-scale stand-in: CONV1 is a strided conv, POOL1 a max-pool, the last
// three stages conv-bn-relu stacks followed by 2x2 average pooling.
class TinyEncoderImpl : public EncoderImpl {
 public:
  TinyEncoderImpl(const std::array<int, 5>& ch, int convs_per_stage) {
    for (int s = 0; s < 5; ++s) {
      nn::Sequential seq;
      if (s == 0) {
        add_conv_bn_relu(seq, 3, ch[0], 2);
        for (int k = 1; k < convs_per_stage; ++k) add_conv_bn_relu(seq, ch[0], ch[0]);
      } else if (s == 1) {
        if (ch[1] != ch[0]) add_conv_bn_relu(seq, ch[0], ch[1]);
      } else {
        add_conv_bn_relu(seq, ch[static_cast<std::size_t>(s - 1)], ch[static_cast<std::size_t>(s)]);
        for (int k = 1; k < convs_per_stage; ++k)
          add_conv_bn_relu(seq, ch[static_cast<std::size_t>(s)], ch[static_cast<std::size_t>(s)]);
      }
      stages_[static_cast<std::size_t>(s)] = register_module("stage" + std::to_string(s), seq);
    }
  }

  FeaturePyramid encode(const torch::Tensor& x) override {
    FeaturePyramid f;
    auto y = stages_[0]->forward(x);
    f["CONV1"] = y;
    y = F::max_pool2d(y, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    if (!stages_[1]->is_empty()) y = stages_[1]->forward(y);
    f["POOL1"] = y;
    for (std::size_t s = 2; s < 5; ++s) {
      y = F::avg_pool2d(stages_[s]->forward(y), F::AvgPool2dFuncOptions(2).stride(2));
      f[kStageNames[s]] = y;
    }
    return f;
  }

 private:
  std::array<nn::Sequential, 5> stages_{nn::Sequential{nullptr}, nn::Sequential{nullptr}, nn::Sequential{nullptr},
                                        nn::Sequential{nullptr}, nn::Sequential{nullptr}};
};

void record(std::vector<LayerShape>* trace, const std::string& name, const torch::Tensor& t) {
  if (trace) trace->push_back({name, {t.size(2), t.size(3), t.size(1)}});
}

}  // namespace

std::shared_ptr<EncoderImpl> make_encoder(const BackboneSpec& spec) {
  if (spec.name == "densenet169") return std::make_shared<DenseNetEncoderImpl>(std::vector<int>{6, 12, 32, 32});
  if (spec.name == "densenet201") return std::make_shared<DenseNetEncoderImpl>(std::vector<int>{6, 12, 48, 32});
  if (spec.name == "tiny") return std::make_shared<TinyEncoderImpl>(spec.stage_channels, 2);
  if (spec.name == "tiny_deep") return std::make_shared<TinyEncoderImpl>(spec.stage_channels, 3);
  throw std::invalid_argument("unknown backbone '" + spec.name + "'");
}

// --- decoder ---------------------------------------------------------------------

UpBlockImpl::UpBlockImpl(int in_channels, int skip_channels, int out_channels, double alpha)
    : conv_a_(register_module("conv_a", conv(in_channels + skip_channels, out_channels, 3, 1, true))),
      conv_b_(register_module("conv_b", conv(out_channels, out_channels, 3, 1, true))),
      alpha_(alpha) {}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip,
                                   std::vector<LayerShape>* trace, const std::string& tag) {
  std::vector<std::int64_t> size{2 * x.size(2), 2 * x.size(3)};
  if (skip.defined()) size = {skip.size(2), skip.size(3)};
  auto y = F::interpolate(x, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
  record(trace, tag, y);
  if (skip.defined()) y = torch::cat({y, skip}, 1);
  record(trace, "CONCAT" + tag.substr(2), y);
  const auto leaky = F::LeakyReLUFuncOptions().negative_slope(alpha_);
  y = F::leaky_relu(conv_a_(y), leaky);
  record(trace, tag + "-CONVA", y);
  y = F::leaky_relu(conv_b_(y), leaky);
  record(trace, tag + "-CONVB", y);
  return y;
}

DepthNetImpl::DepthNetImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& ch = config_.backbone.stage_channels;
  encoder_ = register_module("encoder", make_encoder(config_.backbone));
  const int width = config_.bridge_channels();
  bridge_ = register_module("bridge", conv(ch[4], width, 1, 1, true));
  const auto filters = config_.decoder_filters();
  int in = width;
  for (std::size_t k = 0; k < 4; ++k) {
    const int skip = config_.use_skip_connections ? ch[3 - k] : 0;
    up_[k] = register_module("up" + std::to_string(k + 1),
                             UpBlock(in, skip, filters[k], config_.leaky_relu_alpha));
    in = filters[k];
  }
  head_ = register_module("head", conv(in, config_.output_channels, 3, 1, true));
}

torch::Tensor DepthNetImpl::forward(const torch::Tensor& images) { return run(images, nullptr); }

torch::Tensor DepthNetImpl::forward_traced(const torch::Tensor& images, std::vector<LayerShape>& trace) {
  return run(images, &trace);
}

torch::Tensor DepthNetImpl::run(const torch::Tensor& images, std::vector<LayerShape>* trace) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw std::invalid_argument("DepthNet: expected a (B,3,H,W) batch");
  if (images.size(2) % 32 != 0 || images.size(3) % 32 != 0)
    throw std::invalid_argument("DepthNet: input " + std::to_string(images.size(2)) + "x" +
                                std::to_string(images.size(3)) + " must be divisible by 32");
  record(trace, "INPUT", images);
  FeaturePyramid f = encoder_->encode(images);
  for (std::size_t s = 0; s < 4; ++s) record(trace, kStageNames[s], f.at(kStageNames[s]));
  auto x = bridge_(f.at("BLOCK4"));
  record(trace, "CONV2", x);
  for (std::size_t k = 0; k < 4; ++k) {
    const torch::Tensor skip = config_.use_skip_connections ? f.at(kStageNames[3 - k]) : torch::Tensor();
    x = up_[k]->forward(x, skip, trace, "UP" + std::to_string(k + 1));
  }
  x = head_(x);
  record(trace, "CONV3", x);
  return x;
}

DepthNet build_model(const ModelConfig& config) {
  DepthNet model(config);
  for (auto& item : model->named_modules()) {
    if (item.key().rfind("encoder", 0) == 0) continue;
    if (auto* c = item.value()->as<nn::Conv2d>()) {
      nn::init::xavier_uniform_(c->weight);
      if (c->bias.defined()) nn::init::zeros_(c->bias);
    }
  }
  if (config.backbone.pretrained) load_encoder_weights(model, config.backbone.weights_uri);
  return model;
}

std::int64_t count_parameters(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters())
    if (p.requires_grad()) n += p.numel();
  return n;
}

void save_encoder_weights(const DepthNet& model, const std::string& path) {
  const std::shared_ptr<nn::Module> encoder = model->encoder();
  torch::save(encoder, path);
}

void load_encoder_weights(const DepthNet& model, const std::string& path) {
  try {
    std::shared_ptr<nn::Module> encoder = model->encoder();
    torch::load(encoder, path);
  } catch (const c10::Error& e) {
    throw std::runtime_error("cannot load encoder weights from '" + path + "': " + e.what_without_backtrace());
  }
}

}  // namespace depthkit
