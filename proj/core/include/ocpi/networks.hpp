#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocpi/ops.hpp"
#include "ocpi/tape.hpp"

namespace ocpi::nn {

struct Param {
  std::string name;
  Tensor value;

  friend bool operator==(const Param&, const Param&) = default;
};

/// Ordered, named parameter tensors.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value);
  std::size_t size() const noexcept { return items_.size(); }
  Param& operator[](std::size_t i) { return items_.at(i); }
  const Param& operator[](std::size_t i) const { return items_.at(i); }
  std::size_t index_of(const std::string& name) const;
  std::size_t scalar_count() const noexcept;
  // Rounds every value to the nearest float (checkpoint precision).
  void round_to_float();
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Param> items_;
};

// Tape handles for a ParamSet, in the same order.
struct Bound {
  std::vector<Var> vars;
  Var operator[](std::size_t i) const { return vars.at(i); }
};

Bound bind(Tape& t, const ParamSet& params, bool trainable);
// d(loss)/d(param) for every bound parameter; zeros where no gradient flowed.
std::vector<Tensor> gradients(Tape& t, const Bound& b, const ParamSet& params);

// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
void he_uniform_init(ParamSet& params, std::uint64_t seed);

enum class Head { linear, softmax };

struct UNetConfig {
  int depth = 4;
  int base_channels = 8;
  int max_channels = 64;
  int in_channels = 1;
  int out_channels = 1;
  bool skip = true;
  Head head = Head::linear;

  // Channels of encoder stage s; stage `depth` is the bottleneck.
  int channels(int stage) const;
  void validate() const;
  void check_input(const Shape& s) const;
  std::string describe() const;
  static UNetConfig parse(const std::string& text);

  static UNetConfig inpainting();
  static UNetConfig segmentation();
};

/// Encoder (conv-conv-pool per stage), bottleneck convs, decoder
/// (upsample-concat-conv-conv per stage) and a 1x1 head. The softmax head
/// emits logits; softmax is applied by the loss and by predict_classes.
class UNet {
 public:
  UNet(const UNetConfig& cfg, std::uint64_t seed);
  UNet(const UNetConfig& cfg, ParamSet params);

  Var forward(Tape& t, const Bound& params, Var x) const;
  Tensor predict(const Tensor& x) const;

  const UNetConfig& config() const noexcept { return cfg_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  static ParamSet make_params(const UNetConfig& cfg);

 private:
  UNetConfig cfg_;
  ParamSet params_;
};

struct LossNetConfig {
  int depth = 4;  // pooling stages tapped as features
  int base_channels = 8;
  int max_channels = 64;
  int bottleneck_dim = 16;
  int height = 64;
  int width = 32;

  int channels(int stage) const;
  int flat_size() const;
  void validate() const;
  std::string describe() const;
  static LossNetConfig parse(const std::string& text);
};

/// Intermediate representations after each max-pooling stage.
struct FeatureStack {
  std::vector<Var> maps;
};

struct Reconstruction {
  Var output;
  Var code;  // bottleneck activation, (n, bottleneck_dim, 1, 1)
  FeatureStack taps;
};

/// Autoencoder whose pooled encoder activations feed the perceptual and
/// style losses once frozen.
class LossNet {
 public:
  LossNet(const LossNetConfig& cfg, std::uint64_t seed);
  LossNet(const LossNetConfig& cfg, ParamSet params, bool frozen);

  Reconstruction reconstruct(Tape& t, const Bound& params, Var x) const;
  // Gradients flow to x only; requires a frozen network.
  FeatureStack features(Tape& t, Var x) const;
  std::vector<Tensor> feature_values(const Tensor& x) const;

  // Rounds weights to checkpoint precision and marks them usable as a loss.
  void freeze();
  bool frozen() const noexcept { return frozen_; }

  const LossNetConfig& config() const noexcept { return cfg_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  static ParamSet make_params(const LossNetConfig& cfg);

 private:
  FeatureStack encode(Tape& t, const Bound& p, Var x, Var* last) const;

  LossNetConfig cfg_;
  ParamSet params_;
  bool frozen_ = false;
};

}  // namespace ocpi::nn
