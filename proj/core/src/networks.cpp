#include "ocpi/networks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ocpi/errors.hpp"
#include "ocpi/rng.hpp"

namespace ocpi::nn {

namespace {

std::map<std::string, std::string> parse_pairs(const std::string& text, const std::string& kind) {
  std::istringstream ss(text);
  std::string word;
  ss >> word;
  if (word != kind) throw ConfigError("expected '" + kind + "' network description, got '" + word + "'");
  std::map<std::string, std::string> kv;
  while (ss >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed network field '" + word + "'");
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  return kv;
}

int get_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("network description lacks '" + key + "'");
  return std::stoi(it->second);
}

void add_conv(ParamSet& ps, const std::string& name, int cin, int cout, int k) {
  ps.add(name + ".w", Tensor(Shape{cout, cin, k, k}));
  ps.add(name + ".b", Tensor(Shape{1, cout, 1, 1}));
}

Var conv(Tape& t, const Bound& b, std::size_t& cursor, Var x) {
  const Var w = b[cursor++];
  const Var bias = b[cursor++];
  return conv2d(t, x, w, bias);
}

void check_params(const ParamSet& expected, const ParamSet& got) {
  if (expected.size() != got.size())
    throw ShapeError("checkpoint has " + std::to_string(got.size()) + " tensors, network needs " +
                     std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != got[i].name) throw ShapeError("parameter '" + got[i].name + "' where '" + expected[i].name + "' expected");
    require_shape(got[i].value, expected[i].value.shape(), expected[i].name.c_str());
  }
}

}  // namespace

std::size_t ParamSet::add(std::string name, Tensor value) {
  items_.push_back(Param{std::move(name), std::move(value)});
  return items_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return i;
  throw StateError("no parameter named '" + name + "'");
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

void ParamSet::round_to_float() {
  for (auto& p : items_)
    for (auto& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
}

Bound bind(Tape& t, const ParamSet& params, bool trainable) {
  Bound b;
  b.vars.reserve(params.size());
  for (const auto& p : params) b.vars.push_back(trainable ? t.parameter(p.value) : t.constant(p.value));
  return b;
}

std::vector<Tensor> gradients(Tape& t, const Bound& b, const ParamSet& params) {
  std::vector<Tensor> g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    g.push_back(t.has_grad(b[i]) ? t.grad(b[i]) : Tensor(params[i].value.shape()));
  return g;
}

void he_uniform_init(ParamSet& params, std::uint64_t seed) {
  auto rng = make_rng(seed, "init");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& s = p.value.shape();
    const bool is_bias = p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0;
    if (is_bias) {
      p.value.fill(0.0);
      continue;
    }
    const double fan_in = static_cast<double>(s.c) * s.h * s.w;
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : p.value.data()) v = uniform(rng, -limit, limit);
  }
}

int UNetConfig::channels(int stage) const {
  long c = static_cast<long>(base_channels) << stage;
  return static_cast<int>(std::min<long>(c, max_channels));
}

void UNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw ConfigError("unet depth must be in [1, 8]");
  if (base_channels < 1 || max_channels < base_channels) throw ConfigError("unet channel counts are invalid");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("unet in/out channels must be >= 1");
  if (head == Head::softmax && out_channels < 2) throw ConfigError("softmax head needs >= 2 classes");
}

void UNetConfig::check_input(const Shape& s) const {
  const int div = 1 << depth;
  if (s.c != in_channels) throw ShapeError("unet expects " + std::to_string(in_channels) + " input channels, got " + s.str());
  if (s.h % div != 0 || s.w % div != 0)
    throw ShapeError("unet input " + s.str() + " not divisible by 2^" + std::to_string(depth));
}

std::string UNetConfig::describe() const {
  std::ostringstream ss;
  ss << "unet depth=" << depth << " base=" << base_channels << " max=" << max_channels << " in=" << in_channels
     << " out=" << out_channels << " skip=" << (skip ? 1 : 0) << " head=" << (head == Head::softmax ? "softmax" : "linear");
  return ss.str();
}

UNetConfig UNetConfig::parse(const std::string& text) {
  const auto kv = parse_pairs(text, "unet");
  UNetConfig c;
  c.depth = get_int(kv, "depth");
  c.base_channels = get_int(kv, "base");
  c.max_channels = get_int(kv, "max");
  c.in_channels = get_int(kv, "in");
  c.out_channels = get_int(kv, "out");
  c.skip = get_int(kv, "skip") != 0;
  const auto h = kv.find("head");
  c.head = (h != kv.end() && h->second == "softmax") ? Head::softmax : Head::linear;
  c.validate();
  return c;
}

UNetConfig UNetConfig::inpainting() { return UNetConfig{}; }

UNetConfig UNetConfig::segmentation() {
  UNetConfig c;
  c.out_channels = 3;
  c.head = Head::softmax;
  return c;
}

ParamSet UNet::make_params(const UNetConfig& cfg) {
  cfg.validate();
  ParamSet ps;
  int prev = cfg.in_channels;
  for (int s = 0; s < cfg.depth; ++s) {
    const std::string stage = "enc" + std::to_string(s);
    add_conv(ps, stage + ".conv1", prev, cfg.channels(s), 3);
    add_conv(ps, stage + ".conv2", cfg.channels(s), cfg.channels(s), 3);
    prev = cfg.channels(s);
  }
  add_conv(ps, "mid.conv1", prev, cfg.channels(cfg.depth), 3);
  add_conv(ps, "mid.conv2", cfg.channels(cfg.depth), cfg.channels(cfg.depth), 3);
  prev = cfg.channels(cfg.depth);
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::string stage = "dec" + std::to_string(s);
    const int cin = prev + (cfg.skip ? cfg.channels(s) : 0);
    add_conv(ps, stage + ".conv1", cin, cfg.channels(s), 3);
    add_conv(ps, stage + ".conv2", cfg.channels(s), cfg.channels(s), 3);
    prev = cfg.channels(s);
  }
  add_conv(ps, "head", prev, cfg.out_channels, 1);
  return ps;
}

UNet::UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(make_params(cfg)) {
  he_uniform_init(params_, seed);
}

UNet::UNet(const UNetConfig& cfg, ParamSet params) : cfg_(cfg), params_(std::move(params)) {
  check_params(make_params(cfg), params_);
}

Var UNet::forward(Tape& t, const Bound& b, Var x) const {
  cfg_.check_input(t.value(x).shape());
  std::size_t cur = 0;
  std::vector<Var> skips;
  Var h = x;
  for (int s = 0; s < cfg_.depth; ++s) {
    h = relu(t, conv(t, b, cur, h));
    h = relu(t, conv(t, b, cur, h));
    skips.push_back(h);
    h = maxpool2x2(t, h);
  }
  h = relu(t, conv(t, b, cur, h));
  h = relu(t, conv(t, b, cur, h));
  for (int s = cfg_.depth - 1; s >= 0; --s) {
    h = upsample_nearest2x(t, h);
    if (cfg_.skip) h = concat_channels(t, h, skips[static_cast<std::size_t>(s)]);
    h = relu(t, conv(t, b, cur, h));
    h = relu(t, conv(t, b, cur, h));
  }
  return conv(t, b, cur, h);
}

Tensor UNet::predict(const Tensor& x) const {
  Tape t;
  const auto b = bind(t, params_, false);
  return t.value(forward(t, b, t.constant(x)));
}

int LossNetConfig::channels(int stage) const {
  long c = static_cast<long>(base_channels) << stage;
  return static_cast<int>(std::min<long>(c, max_channels));
}

int LossNetConfig::flat_size() const { return channels(depth - 1) * (height >> depth) * (width >> depth); }

void LossNetConfig::validate() const {
  if (depth < 1 || depth > 8) throw ConfigError("loss network depth must be in [1, 8]");
  if (base_channels < 1 || max_channels < base_channels) throw ConfigError("loss network channel counts are invalid");
  if (bottleneck_dim < 1) throw ConfigError("bottleneck_dim must be >= 1");
  const int div = 1 << depth;
  if (height < div || width < div || height % div != 0 || width % div != 0)
    throw ConfigError("loss network input " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by 2^" + std::to_string(depth));
}

std::string LossNetConfig::describe() const {
  std::ostringstream ss;
  ss << "lossnet depth=" << depth << " base=" << base_channels << " max=" << max_channels
     << " bottleneck=" << bottleneck_dim << " height=" << height << " width=" << width;
  return ss.str();
}

LossNetConfig LossNetConfig::parse(const std::string& text) {
  const auto kv = parse_pairs(text, "lossnet");
  LossNetConfig c;
  c.depth = get_int(kv, "depth");
  c.base_channels = get_int(kv, "base");
  c.max_channels = get_int(kv, "max");
  c.bottleneck_dim = get_int(kv, "bottleneck");
  c.height = get_int(kv, "height");
  c.width = get_int(kv, "width");
  c.validate();
  return c;
}

ParamSet LossNet::make_params(const LossNetConfig& cfg) {
  cfg.validate();
  ParamSet ps;
  int prev = 1;
  for (int s = 0; s < cfg.depth; ++s) {
    const std::string stage = "enc" + std::to_string(s);
    add_conv(ps, stage + ".conv1", prev, cfg.channels(s), 3);
    add_conv(ps, stage + ".conv2", cfg.channels(s), cfg.channels(s), 3);
    prev = cfg.channels(s);
  }
  const int flat = cfg.flat_size();
  ps.add("bottleneck.down.w", Tensor(Shape{cfg.bottleneck_dim, flat, 1, 1}));
  ps.add("bottleneck.down.b", Tensor(Shape{1, cfg.bottleneck_dim, 1, 1}));
  ps.add("bottleneck.up.w", Tensor(Shape{flat, cfg.bottleneck_dim, 1, 1}));
  ps.add("bottleneck.up.b", Tensor(Shape{1, flat, 1, 1}));
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::string stage = "dec" + std::to_string(s);
    add_conv(ps, stage + ".conv1", prev, cfg.channels(s), 3);
    add_conv(ps, stage + ".conv2", cfg.channels(s), cfg.channels(s), 3);
    prev = cfg.channels(s);
  }
  add_conv(ps, "head", prev, 1, 1);
  return ps;
}

LossNet::LossNet(const LossNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(make_params(cfg)) {
  he_uniform_init(params_, seed);
}

LossNet::LossNet(const LossNetConfig& cfg, ParamSet params, bool frozen)
    : cfg_(cfg), params_(std::move(params)), frozen_(frozen) {
  check_params(make_params(cfg), params_);
}

FeatureStack LossNet::encode(Tape& t, const Bound& b, Var x, Var* last) const {
  const auto& s = t.value(x).shape();
  if (s.c != 1 || s.h != cfg_.height || s.w != cfg_.width)
    throw ShapeError("loss network expects (n, 1, " + std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                     "), got " + s.str());
  std::size_t cur = 0;
  FeatureStack fs;
  Var h = x;
  for (int st = 0; st < cfg_.depth; ++st) {
    h = relu(t, conv(t, b, cur, h));
    h = relu(t, conv(t, b, cur, h));
    h = maxpool2x2(t, h);
    fs.maps.push_back(h);
  }
  if (last) *last = h;
  return fs;
}

Reconstruction LossNet::reconstruct(Tape& t, const Bound& b, Var x) const {
  Reconstruction r;
  Var h;
  r.taps = encode(t, b, x, &h);
  const int n = t.value(x).shape().n;
  std::size_t cur = static_cast<std::size_t>(4 * cfg_.depth);
  r.code = dense(t, h, b[cur], b[cur + 1]);
  cur += 2;
  h = relu(t, dense(t, r.code, b[cur], b[cur + 1]));
  cur += 2;
  h = reshape(t, h, Shape{n, cfg_.channels(cfg_.depth - 1), cfg_.height >> cfg_.depth, cfg_.width >> cfg_.depth});
  for (int st = cfg_.depth - 1; st >= 0; --st) {
    h = upsample_nearest2x(t, h);
    h = relu(t, conv(t, b, cur, h));
    h = relu(t, conv(t, b, cur, h));
  }
  r.output = conv(t, b, cur, h);
  return r;
}

FeatureStack LossNet::features(Tape& t, Var x) const {
  if (!frozen_) throw StateError("loss network is not trained/frozen");
  const auto b = bind(t, params_, false);
  return encode(t, b, x, nullptr);
}

std::vector<Tensor> LossNet::feature_values(const Tensor& x) const {
  Tape t;
  const auto fs = features(t, t.constant(x));
  std::vector<Tensor> out;
  for (auto v : fs.maps) out.push_back(t.value(v));
  return out;
}

void LossNet::freeze() {
  params_.round_to_float();
  frozen_ = true;
}

}  // namespace ocpi::nn
