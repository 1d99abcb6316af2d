#pragma once

// Encoder-decoder depth network: a truncated classification backbone feeding
// a 1x1 bridge convolution and four bilinear upsampling blocks that
// concatenate same-resolution encoder activations. Output is a single
// channel at half the input resolution, in reciprocal-depth target space.

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "depthkit/config.hpp"

namespace depthkit {

inline constexpr std::array<const char*, 5> kStageNames{"CONV1", "POOL1", "POOL2", "POOL3", "BLOCK4"};
inline constexpr std::array<int, 5> kStageStrides{2, 4, 8, 16, 32};

struct BackboneSpec {
  std::string name = "tiny";  // tiny | tiny_deep | densenet169 | densenet201
  std::array<int, 5> stage_channels{};
  bool pretrained = false;
  std::string weights_uri;
  double width_multiplier = 1.0;  // tiny backbones only

  void validate() const;

  static BackboneSpec densenet169();
  static BackboneSpec densenet201();
};

/// Random-init five-stage conv backbone; channels are the DenseNet-169 stage
/// channels scaled by `width_multiplier` (rounded, at least 1).
BackboneSpec make_tiny_backbone(double width_multiplier, bool deep = false);

struct ModelConfig {
  BackboneSpec backbone = make_tiny_backbone(1.0 / 16.0);
  int decoder_width = 0;  // 0: same as the BLOCK4 channels
  bool use_skip_connections = true;
  double leaky_relu_alpha = 0.2;
  int output_channels = 1;

  int bridge_channels() const;
  /// Output filters of the four upsampling blocks (each half the previous).
  std::array<int, 4> decoder_filters() const;
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_items(const std::string& prefix = "model.") const;
  static ModelConfig from_config(const KeyValueFile& kv, const std::string& prefix = "model.");
};

/// Encoder activations keyed by stage name.
using FeaturePyramid = std::map<std::string, torch::Tensor>;

class EncoderImpl : public torch::nn::Module {
 public:
  virtual FeaturePyramid encode(const torch::Tensor& x) = 0;
};

struct LayerShape {
  std::string name;
  std::array<std::int64_t, 3> hwc;  // height, width, channels
};

class UpBlockImpl : public torch::nn::Module {
 public:
  UpBlockImpl(int in_channels, int skip_channels, int out_channels, double alpha);
  /// `skip` may be undefined; the output size is then twice the input.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip,
                        std::vector<LayerShape>* trace = nullptr, const std::string& tag = "");

 private:
  torch::nn::Conv2d conv_a_{nullptr};
  torch::nn::Conv2d conv_b_{nullptr};
  double alpha_;
};
TORCH_MODULE(UpBlock);

class DepthNetImpl : public torch::nn::Module {
 public:
  explicit DepthNetImpl(const ModelConfig& config);

  torch::Tensor forward(const torch::Tensor& images);
  /// Same as forward, additionally recording every named layer shape.
  torch::Tensor forward_traced(const torch::Tensor& images, std::vector<LayerShape>& trace);

  const ModelConfig& config() const { return config_; }
  std::shared_ptr<EncoderImpl> encoder() const { return encoder_; }

 private:
  torch::Tensor run(const torch::Tensor& images, std::vector<LayerShape>* trace);

  ModelConfig config_;
  std::shared_ptr<EncoderImpl> encoder_;
  torch::nn::Conv2d bridge_{nullptr};
  std::array<UpBlock, 4> up_{UpBlock{nullptr}, UpBlock{nullptr}, UpBlock{nullptr}, UpBlock{nullptr}};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(DepthNet);

/// Builds the network. Encoder weights are loaded from backbone.weights_uri
/// when backbone.pretrained is set; otherwise everything is randomly
/// initialised (decoder with Glorot-uniform weights and zero biases).
DepthNet build_model(const ModelConfig& config);

std::int64_t count_parameters(const torch::nn::Module& module);

void save_encoder_weights(const DepthNet& model, const std::string& path);
void load_encoder_weights(const DepthNet& model, const std::string& path);

std::shared_ptr<EncoderImpl> make_encoder(const BackboneSpec& spec);

}  // namespace depthkit
