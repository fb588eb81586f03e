// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/upsnet/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "unipde/common.hpp"

namespace unipde::net {
namespace {

using json = nlohmann::json;
using gk::Tensor;
using gk::Var;

std::string fno(std::size_t i, const char* leaf) { return "fno." + std::to_string(i) + "." + leaf; }
std::string body(std::size_t i, const char* leaf) { return "body." + std::to_string(i) + "." + leaf; }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (channels < 1) fail("channels (l) must be >= 1");
  if (!is_pow2(n)) fail("n must be a power of two");
  if (modes < 1 || modes > n / 2) fail("modes must be in [1, n/2]");
  if (fno_depth < 1) fail("fno_depth must be >= 1");
  if (embed < 1 || heads < 1 || embed % heads != 0) fail("embed must be a positive multiple of heads");
  if (quantities < 1) fail("quantities must be >= 1");
  if (max_meta_len < 3) fail("max_meta_len must be >= 3");
  if (vocab < kVocabSize) fail("vocab too small for the byte tokenizer");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
}

std::string ModelConfig::to_json() const {
  json j = {{"channels", channels}, {"modes", modes},           {"fno_depth", fno_depth},
            {"embed", embed},       {"body_depth", body_depth}, {"heads", heads},
            {"n", n},               {"quantities", quantities}, {"use_coords", use_coords},
            {"use_metadata", use_metadata}, {"max_meta_len", max_meta_len}, {"vocab", vocab},
            {"mlp_ratio", mlp_ratio}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.channels = j.at("channels");
    c.modes = j.at("modes");
    c.fno_depth = j.at("fno_depth");
    c.embed = j.at("embed");
    c.body_depth = j.at("body_depth");
    c.heads = j.at("heads");
    c.n = j.at("n");
    c.quantities = j.at("quantities");
    c.use_coords = j.at("use_coords");
    c.use_metadata = j.at("use_metadata");
    c.max_meta_len = j.at("max_meta_len");
    c.vocab = j.at("vocab");
    c.mlp_ratio = j.at("mlp_ratio");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t l = c.channels, m = c.modes, e = c.embed, n2 = c.n * c.n, cin = c.input_channels();
  const std::size_t spec = 2 * 2 * m * m;
  std::size_t total = cin * l * spec + l * cin + l;
  total += (c.fno_depth - 1) * (l * l * spec + l * l + l);
  total += n2 * e + e;
  total += c.vocab * e + 2 * e;
  const std::size_t hidden = c.mlp_ratio * e;
  total += c.body_depth * (4 * e + 4 * (e * e + e) + (e * hidden + hidden) + (hidden * e + e));
  total += 2 * e;
  total += e * c.quantities * n2 + c.quantities * n2;
  return total;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  const bool train = trainable_ ? trainable_(name) : true;
  return tape_.param(name, it->second, train);
}

Var spectral_conv2d(Var x, Var weights, std::size_t modes) {
  const std::size_t n = x.shape().back();
  return gk::irfft2_trunc(gk::spectral_mix(gk::rfft2_trunc(x, modes), weights), n);
}

Var fno_block(Var x, Var spectral, Var pointwise_w, Var pointwise_b, std::size_t modes) {
  const auto& s = x.shape();
  if (s.size() != 4) throw std::invalid_argument("fno_block: expects [B, C, n, n], got " + gk::shape_str(s));
  const std::size_t b = s[0], cin = s[1], n = s[2];
  const std::size_t cout = pointwise_w.shape()[0];
  Var sp = gk::reshape(spectral_conv2d(x, spectral, modes), {b, cout, n * n});
  Var pw = gk::channel_mix(gk::reshape(x, {b, cin, n * n}), pointwise_w, pointwise_b);
  return gk::reshape(gk::gelu(gk::add(sp, pw)), {b, cout, n, n});
}

Tensor positional_encoding(std::size_t len, std::size_t width) {
  Tensor pe({len, width});
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
      pe[p * width + i] = std::sin(static_cast<double>(p) * freq);
      if (i + 1 < width) pe[p * width + i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  init(seed);
}

void Model::init(std::uint64_t seed) {
  params_.clear();
  std::mt19937_64 rng(seed);
  auto uniform = [&](gk::Shape shape, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = d(rng);
    return t;
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    const double b = 1.0 / std::sqrt(static_cast<double>(in));
    params_[prefix + ".weight"] = uniform({in, out}, b);
    params_[prefix + ".bias"] = uniform({out}, b);
  };
  auto norm = [&](const std::string& prefix) {
    params_[prefix + ".gamma"] = Tensor::full({cfg_.embed}, 1.0);
    params_[prefix + ".beta"] = Tensor({cfg_.embed});
  };
  const std::size_t l = cfg_.channels, m = cfg_.modes, e = cfg_.embed;
  for (std::size_t i = 0; i < cfg_.fno_depth; ++i) {
    const std::size_t cin = i == 0 ? cfg_.input_channels() : l;
    const double scale = 1.0 / static_cast<double>(cin * l);
    Tensor w({cin, l, 2 * m, m}, gk::DType::kComplex);
    std::uniform_real_distribution<double> d(-scale, scale);
    for (double& v : w.data()) v = d(rng);
    params_[fno(i, "spectral")] = std::move(w);
    const double b = 1.0 / std::sqrt(static_cast<double>(cin));
    params_[fno(i, "pointwise.weight")] = uniform({l, cin}, b);
    params_[fno(i, "pointwise.bias")] = uniform({l}, b);
  }
  linear("proj", cfg_.n * cfg_.n, e);
  {
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor emb({cfg_.vocab, e});
    for (double& v : emb.data()) v = nd(rng);
    params_["meta.embedding"] = std::move(emb);
  }
  norm("embed_norm");
  for (std::size_t i = 0; i < cfg_.body_depth; ++i) {
    norm(body(i, "ln1"));
    linear(body(i, "attn.q"), e, e);
    linear(body(i, "attn.k"), e, e);
    linear(body(i, "attn.v"), e, e);
    linear(body(i, "attn.o"), e, e);
    norm(body(i, "ln2"));
    linear(body(i, "mlp.fc1"), e, cfg_.mlp_ratio * e);
    linear(body(i, "mlp.fc2"), cfg_.mlp_ratio * e, e);
  }
  norm("body.final_norm");
  linear("predictor", e, cfg_.quantities * cfg_.n * cfg_.n);
}

Var Model::embed_pde(ParamBinder& p, Var inputs) const {
  const auto& s = inputs.shape();
  if (s.size() != 4 || s[1] != cfg_.input_channels() || s[2] != cfg_.n || s[3] != cfg_.n) {
    throw std::invalid_argument("embed_pde: expected [B, " + std::to_string(cfg_.input_channels()) + ", " +
                                std::to_string(cfg_.n) + ", " + std::to_string(cfg_.n) + "], got " + gk::shape_str(s));
  }
  const std::size_t b = s[0];
  Var h = inputs;
  for (std::size_t i = 0; i < cfg_.fno_depth; ++i) {
    h = fno_block(h, p(fno(i, "spectral")), p(fno(i, "pointwise.weight")), p(fno(i, "pointwise.bias")), cfg_.modes);
  }
  // Each FNO channel becomes one token; its n^2 grid values are projected to e.
  Var flat = gk::reshape(h, {b * cfg_.channels, cfg_.n * cfg_.n});
  return gk::linear(flat, p("proj.weight"), p("proj.bias"));
}

Var Model::embed_meta(ParamBinder& p, const std::string& metadata) const {
  const auto ids = tokenize_meta(metadata, cfg_.max_meta_len);
  return gk::gather_rows(p("meta.embedding"), std::vector<std::size_t>(ids.begin(), ids.end()));
}

Var Model::assemble(ParamBinder& p, Var h_pde, const std::vector<std::string>& metadata,
                    std::vector<gk::Segment>* segments) const {
  const std::size_t l = cfg_.channels, e = cfg_.embed;
  const auto& hs = h_pde.shape();
  if (hs.size() != 2 || hs[1] != e) throw std::invalid_argument("assemble: PDE features must be [rows, e], got " + gk::shape_str(hs));
  const std::size_t b = hs[0] / l;
  if (b * l != hs[0] || (cfg_.use_metadata && metadata.size() != b)) {
    throw std::invalid_argument("assemble: batch of " + std::to_string(metadata.size()) + " metadata strings for " +
                                std::to_string(hs[0]) + " PDE rows");
  }
  std::vector<gk::Segment> segs;
  Var packed = h_pde;
  std::size_t max_len = l;
  if (cfg_.use_metadata) {
    std::vector<std::size_t> ids;
    std::vector<std::size_t> meta_len;
    for (const auto& m : metadata) {
      const auto t = tokenize_meta(m, cfg_.max_meta_len);
      ids.insert(ids.end(), t.begin(), t.end());
      meta_len.push_back(t.size());
    }
    const std::size_t meta_rows = ids.size();
    Var meta = gk::gather_rows(p("meta.embedding"), ids);
    Var all = gk::concat({meta, h_pde}, 0);
    std::vector<std::size_t> order;
    order.reserve(meta_rows + b * l);
    std::size_t meta_off = 0;
    for (std::size_t i = 0; i < b; ++i) {
      segs.push_back({order.size(), meta_len[i] + l});
      for (std::size_t k = 0; k < meta_len[i]; ++k) order.push_back(meta_off + k);
      for (std::size_t k = 0; k < l; ++k) order.push_back(meta_rows + i * l + k);
      meta_off += meta_len[i];
      max_len = std::max(max_len, meta_len[i] + l);
    }
    packed = gk::gather_rows(all, std::move(order));
  } else {
    for (std::size_t i = 0; i < b; ++i) segs.push_back({i * l, l});
  }
  const Tensor table = positional_encoding(max_len, e);
  Tensor pe({packed.shape()[0], e});
  for (const auto& sg : segs) {
    std::copy_n(table.ptr(), sg.length * e, pe.ptr() + sg.offset * e);
  }
  Var x = gk::add(packed, p.tape().constant(std::move(pe)));
  Var out = gk::affine(gk::layernorm(x, 1), p("embed_norm.gamma"), p("embed_norm.beta"));
  if (segments) *segments = std::move(segs);
  return out;
}

Var Model::body_forward(ParamBinder& p, Var mix, const std::vector<gk::Segment>& segments,
                        std::vector<Tensor>* attention) const {
  Var h = mix;
  for (std::size_t i = 0; i < cfg_.body_depth; ++i) {
    Var a = gk::affine(gk::layernorm(h, 1), p(body(i, "ln1.gamma")), p(body(i, "ln1.beta")));
    Var q = gk::linear(a, p(body(i, "attn.q.weight")), p(body(i, "attn.q.bias")));
    Var k = gk::linear(a, p(body(i, "attn.k.weight")), p(body(i, "attn.k.bias")));
    Var v = gk::linear(a, p(body(i, "attn.v.weight")), p(body(i, "attn.v.bias")));
    Var att = gk::self_attention(q, k, v, segments, cfg_.heads, attention);
    h = gk::add(h, gk::linear(att, p(body(i, "attn.o.weight")), p(body(i, "attn.o.bias"))));
    Var a2 = gk::affine(gk::layernorm(h, 1), p(body(i, "ln2.gamma")), p(body(i, "ln2.beta")));
    Var f = gk::gelu(gk::linear(a2, p(body(i, "mlp.fc1.weight")), p(body(i, "mlp.fc1.bias"))));
    h = gk::add(h, gk::linear(f, p(body(i, "mlp.fc2.weight")), p(body(i, "mlp.fc2.bias"))));
  }
  return gk::affine(gk::layernorm(h, 1), p("body.final_norm.gamma"), p("body.final_norm.beta"));
}

Var Model::predict(ParamBinder& p, Var hidden, const std::vector<gk::Segment>& segments) const {
  Var pooled = gk::segment_mean(hidden, segments);
  Var out = gk::linear(pooled, p("predictor.weight"), p("predictor.bias"));
  return gk::reshape(out, {segments.size(), cfg_.quantities, cfg_.n, cfg_.n});
}

ForwardResult Model::forward(ParamBinder& p, const Tensor& inputs, const std::vector<std::string>& metadata) const {
  ForwardResult r;
  Var x = p.tape().constant(inputs);
  Var h_pde = embed_pde(p, x);
  r.mix = assemble(p, h_pde, metadata, &r.segments);
  r.pooled_mix = gk::segment_mean(r.mix, r.segments);
  Var hidden = body_forward(p, r.mix, r.segments);
  r.prediction = predict(p, hidden, r.segments);
  return r;
}

Tensor Model::predict_tensor(const Tensor& inputs, const std::vector<std::string>& metadata) const {
  gk::Tape tape;
  ParamBinder p(tape, params_, [](const std::string&) { return false; });
  return forward(p, inputs, metadata).prediction.value();
}

Tensor Model::pooled_text_embedding(const std::string& text) const {
  if (text.empty()) throw std::invalid_argument("pooled_text_embedding: empty text");
  const auto ids = tokenize_meta(text, cfg_.max_meta_len);
  const Tensor& table = params_.at("meta.embedding");
  const std::size_t e = cfg_.embed;
  Tensor out({e});
  for (int id : ids) {
    for (std::size_t k = 0; k < e; ++k) out[k] += table[static_cast<std::size_t>(id) * e + k];
  }
  for (double& v : out.data()) v /= static_cast<double>(ids.size());
  return out;
}

void Model::save(const std::filesystem::path& weights_path) const { gk::write_weights(weights_path, params_); }

namespace {

void check_entries(const gk::NamedTensors& expected, const gk::NamedTensors& got, const std::function<bool(const std::string&)>& use) {
  std::vector<std::string> bad;
  for (const auto& [name, t] : expected) {
    if (!use(name)) continue;
    auto it = got.find(name);
    if (it == got.end()) {
      bad.push_back(name + " (missing)");
    } else if (it->second.shape() != t.shape() || it->second.is_complex() != t.is_complex()) {
      bad.push_back(name + " (expected " + gk::shape_str(t.shape()) + ", file has " + gk::shape_str(it->second.shape()) + ")");
    }
  }
  if (!bad.empty()) {
    std::string msg = "weight file does not match the model config:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw FormatError(msg);
  }
}

}  // namespace

void Model::load(const std::filesystem::path& weights_path) { assign(gk::read_weights(weights_path)); }

void Model::assign(const gk::NamedTensors& got) {
  check_entries(params_, got, [](const std::string&) { return true; });
  for (auto& [name, t] : params_) {
    Tensor v = got.at(name);
    v.set_dtype_tag(t.dtype());
    t = std::move(v);
  }
}

void Model::load_body_weights(const std::filesystem::path& weights_path) {
  gk::NamedTensors got = gk::read_weights(weights_path);
  check_entries(params_, got, is_body_param);
  for (auto& [name, t] : params_) {
    if (!is_body_param(name)) continue;
    Tensor v = got.at(name);
    v.set_dtype_tag(t.dtype());
    t = std::move(v);
  }
}

}  // namespace unipde::net
