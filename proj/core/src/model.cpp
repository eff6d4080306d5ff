// SPDX-License-Identifier: Apache-2.0
#include "ltk/model.hpp"

#include <cstring>
#include <fstream>

#include "ltk/rng.hpp"

namespace ltk {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'K', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_i32(std::ostream& os, std::int32_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    raise(ErrorCategory::parse, "checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }

double read_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    raise(ErrorCategory::parse, "checkpoint truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (double v : t.values()) write_f64(os, v);
}

void read_tensor_into(std::istream& is, Tensor& t) {
  std::uint32_t nd = read_u32(is);
  std::vector<int> shape(nd);
  for (auto& d : shape) d = static_cast<int>(read_u32(is));
  if (shape != t.shape()) {
    raise(ErrorCategory::parse, "checkpoint tensor shape " + shape_str(shape) +
                                    " does not match layer shape " + shape_str(t.shape()));
  }
  for (auto& v : t.values()) v = read_f64(is);
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels <= 0 || height <= 0 || width <= 0 || classes <= 0)
    raise(ErrorCategory::config, "model geometry must be positive");
  if (channels.empty()) raise(ErrorCategory::config, "model needs at least one conv block");
  for (int c : channels)
    if (c <= 0) raise(ErrorCategory::config, "conv filter counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0)
    raise(ErrorCategory::config, "conv kernel must be positive and odd");
  if (latent_block < 1 || latent_block > static_cast<int>(channels.size()))
    raise(ErrorCategory::config,
          "latent block " + std::to_string(latent_block) + " outside [1, " +
              std::to_string(channels.size()) + "]");
}

SplitModel SplitModel::build(const ModelConfig& cfg) {
  cfg.validate();
  SplitModel m;
  m.cfg_ = cfg;

  int h = cfg.height, w = cfg.width;
  int in_ch = cfg.in_channels;
  const int pad = cfg.kernel / 2;
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    int out_ch = cfg.channels[b];
    m.layers_.emplace_back(LayerSpec::conv2d(in_ch, out_ch, cfg.kernel, 1, pad));
    m.layers_.emplace_back(LayerSpec::batchnorm(out_ch));
    if (static_cast<int>(b) + 1 == cfg.latent_block)
      m.latent_index_ = static_cast<int>(m.layers_.size()) - 1;
    m.layers_.emplace_back(LayerSpec::relu());
    m.layers_.emplace_back(LayerSpec::maxpool(2, 2));
    h = conv_out_extent(h, 2, 2, 0, "model height");
    w = conv_out_extent(w, 2, 2, 0, "model width");
    in_ch = out_ch;
  }
  m.layers_.emplace_back(LayerSpec::flatten());
  m.layers_.emplace_back(LayerSpec::dense(in_ch * h * w, cfg.classes));

  for (std::size_t i = 0; i < m.layers_.size(); ++i)
    m.layers_[i].init_params(mix_seed(cfg.seed, seed_tag::layer_init, i));
  return m;
}

Tensor SplitModel::forward(const Tensor& x, Mode mode) {
  return forward_post(forward_pre(x, mode), mode);
}

Tensor SplitModel::forward_pre(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (int i = 0; i <= latent_index_; ++i) h = layers_[static_cast<std::size_t>(i)].forward(h, mode);
  return h;
}

Tensor SplitModel::forward_post(const Tensor& z, Mode mode) {
  Tensor h = z;
  for (std::size_t i = static_cast<std::size_t>(latent_index_) + 1; i < layers_.size(); ++i)
    h = layers_[i].forward(h, mode);
  return h;
}

void SplitModel::set_latent_block(int block) {
  if (block < 1 || block > static_cast<int>(cfg_.channels.size()))
    raise(ErrorCategory::config, "latent block " + std::to_string(block) + " outside [1, " +
                                     std::to_string(cfg_.channels.size()) + "]");
  int seen = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].spec().kind == LayerKind::batchnorm && ++seen == block) {
      latent_index_ = static_cast<int>(i);
      cfg_.latent_block = block;
      return;
    }
  }
  raise(ErrorCategory::usage, "model lacks a batchnorm for block " + std::to_string(block));
}

std::vector<int> SplitModel::latent_shape(int batch) const {
  int h = cfg_.height, w = cfg_.width;
  for (int b = 1; b < cfg_.latent_block; ++b) {
    h = conv_out_extent(h, 2, 2, 0, "latent height");
    w = conv_out_extent(w, 2, 2, 0, "latent width");
  }
  return {batch, cfg_.channels[static_cast<std::size_t>(cfg_.latent_block - 1)], h, w};
}

std::vector<Tensor> SplitModel::parameters() {
  std::vector<Tensor> out;
  for (auto& l : layers_)
    for (auto& p : l.parameters()) out.push_back(p);
  return out;
}

void SplitModel::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

void SplitModel::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
}

void SplitModel::unfreeze() {
  for (auto& p : parameters()) p.set_requires_grad(true);
}

bool SplitModel::frozen() {
  for (auto& p : parameters())
    if (p.requires_grad()) return false;
  return true;
}

SplitModel SplitModel::clone() const {
  SplitModel out;
  out.cfg_ = cfg_;
  out.latent_index_ = latent_index_;
  out.layers_.reserve(layers_.size());
  for (const auto& l : layers_) out.layers_.push_back(l.clone());
  return out;
}

void SplitModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCategory::io, "cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(layers_.size()));
  write_i32(os, latent_index_);
  write_u32(os, static_cast<std::uint32_t>(cfg_.in_channels));
  write_u32(os, static_cast<std::uint32_t>(cfg_.height));
  write_u32(os, static_cast<std::uint32_t>(cfg_.width));
  write_u32(os, static_cast<std::uint32_t>(cfg_.classes));
  write_u32(os, static_cast<std::uint32_t>(cfg_.channels.size()));
  for (int c : cfg_.channels) write_u32(os, static_cast<std::uint32_t>(c));
  write_u32(os, static_cast<std::uint32_t>(cfg_.kernel));
  write_u32(os, static_cast<std::uint32_t>(cfg_.latent_block));
  write_u32(os, static_cast<std::uint32_t>(cfg_.seed & 0xffffffffu));
  write_u32(os, static_cast<std::uint32_t>(cfg_.seed >> 32));

  for (const auto& layer : layers_) {
    const LayerSpec& s = layer.spec();
    write_u32(os, static_cast<std::uint32_t>(s.kind));
    write_i32(os, s.units_in);
    write_i32(os, s.units_out);
    write_i32(os, s.in_channels);
    write_i32(os, s.out_channels);
    write_i32(os, s.kernel);
    write_i32(os, s.stride);
    write_i32(os, s.padding);
    write_i32(os, s.channels);
    write_f64(os, s.epsilon);
    write_f64(os, s.momentum);
    auto& mut = const_cast<Layer&>(layer);
    for (const auto& t : mut.parameters()) write_tensor(os, t);
    for (const auto& t : mut.state()) write_tensor(os, t);
  }
  if (!os) raise(ErrorCategory::io, "write failed for " + path);
}

SplitModel SplitModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCategory::io, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorCategory::parse, path + " is not a model checkpoint");

  SplitModel m;
  std::uint32_t layer_count = read_u32(is);
  m.latent_index_ = read_i32(is);
  m.cfg_.in_channels = static_cast<int>(read_u32(is));
  m.cfg_.height = static_cast<int>(read_u32(is));
  m.cfg_.width = static_cast<int>(read_u32(is));
  m.cfg_.classes = static_cast<int>(read_u32(is));
  std::uint32_t nblocks = read_u32(is);
  m.cfg_.channels.assign(nblocks, 0);
  for (auto& c : m.cfg_.channels) c = static_cast<int>(read_u32(is));
  m.cfg_.kernel = static_cast<int>(read_u32(is));
  m.cfg_.latent_block = static_cast<int>(read_u32(is));
  std::uint64_t seed_lo = read_u32(is);
  std::uint64_t seed_hi = read_u32(is);
  m.cfg_.seed = seed_lo | (seed_hi << 32);

  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec s;
    s.kind = static_cast<LayerKind>(read_u32(is));
    s.units_in = read_i32(is);
    s.units_out = read_i32(is);
    s.in_channels = read_i32(is);
    s.out_channels = read_i32(is);
    s.kernel = read_i32(is);
    s.stride = read_i32(is);
    s.padding = read_i32(is);
    s.channels = read_i32(is);
    s.epsilon = read_f64(is);
    s.momentum = read_f64(is);
    Layer layer(s);
    for (auto& t : layer.parameters()) read_tensor_into(is, t);
    for (auto& t : layer.state()) read_tensor_into(is, t);
    m.layers_.push_back(std::move(layer));
  }
  if (m.latent_index_ < 0 || m.latent_index_ >= static_cast<int>(m.layers_.size()))
    raise(ErrorCategory::parse, "checkpoint latent index out of range");
  return m;
}

}  // namespace ltk
