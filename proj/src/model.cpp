#include "ct/model.hpp"

#include <cmath>

#include "ct/rng.hpp"

namespace ct {

template <typename T>
Tensor<T> ConvTransformerModel<T>::init_weight(Shape shape, std::size_t fan_in) {
  CounterRng rng(seed_, ++init_stream_);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> v(numel(shape));
  for (auto& x : v)
    x = static_cast<T>((rng.next_uniform() * 2.0 - 1.0) * bound);
  return Tensor<T>::from_vector(std::move(shape), std::move(v), true);
}

template <typename T>
void ConvTransformerModel<T>::register_param(const std::string& name,
                                             Tensor<T> t) {
  params_.emplace_back(name, std::move(t));
}

template <typename T>
void ConvTransformerModel<T>::register_bn(const std::string& name,
                                          BatchNormState<T>& bn) {
  params_.emplace_back(name + ".gamma", bn.gamma);
  params_.emplace_back(name + ".beta", bn.beta);
  buffers_.emplace_back(name + ".running_mean", &bn.running_mean);
  buffers_.emplace_back(name + ".running_var", &bn.running_var);
}

template <typename T>
ConvTransformerModel<T>::ConvTransformerModel(VariantConfig cfg,
                                              std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  const std::size_t c = cfg_.local_channels, e = cfg_.expanded_channels,
                    f = cfg_.final_channels, p = cfg_.patches(),
                    km = cfg_.spatial_kernel, t = cfg_.time_frames;

  lfe_w3_ = init_weight({c / 2, 1, km, km, 3}, km * km * 3);
  lfe_b3_ = Tensor<T>(Shape{c / 2}, T(0), true);
  lfe_w5_ = init_weight({c / 2, 1, km, km, 5}, km * km * 5);
  lfe_b5_ = Tensor<T>(Shape{c / 2}, T(0), true);
  lfe_bn_ = std::make_unique<BatchNormState<T>>(c);
  register_param("lfe.conv3.weight", lfe_w3_);
  register_param("lfe.conv3.bias", lfe_b3_);
  register_param("lfe.conv5.weight", lfe_w5_);
  register_param("lfe.conv5.bias", lfe_b5_);
  register_bn("lfe.bn", *lfe_bn_);

  for (int m = 0; m < 2; ++m) {
    ct_[m] = std::make_unique<CtBlock>(c, e);
    auto& blk = *ct_[m];
    const std::string pre = "ct" + std::to_string(m + 1);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string hp = pre + ".head" + std::to_string(h);
      blk.q_w.push_back(init_weight({cfg_.head_dim, c, 1, 1}, c));
      blk.k_w.push_back(init_weight({cfg_.head_dim, c, 1, 1}, c));
      blk.v_w.push_back(init_weight({cfg_.head_dim, c, 1, 1}, c));
      register_param(hp + ".q.weight", blk.q_w.back());
      register_param(hp + ".k.weight", blk.k_w.back());
      register_param(hp + ".v.weight", blk.v_w.back());
    }
    register_bn(pre + ".mha_bn", blk.mha_bn);
    blk.cfe_w3 = init_weight({e / 2, c, 1, 3}, c * 3);
    blk.cfe_b3 = Tensor<T>(Shape{e / 2}, T(0), true);
    blk.cfe_w5 = init_weight({e / 2, c, 1, 5}, c * 5);
    blk.cfe_b5 = Tensor<T>(Shape{e / 2}, T(0), true);
    blk.cfe_pw = init_weight({c, e, 1, 1}, e);
    register_param(pre + ".cfe.conv3.weight", blk.cfe_w3);
    register_param(pre + ".cfe.conv3.bias", blk.cfe_b3);
    register_param(pre + ".cfe.conv5.weight", blk.cfe_w5);
    register_param(pre + ".cfe.conv5.bias", blk.cfe_b5);
    register_bn(pre + ".cfe.expand_bn", blk.expand_bn);
    register_param(pre + ".cfe.pointwise.weight", blk.cfe_pw);
    register_bn(pre + ".cfe.out_bn", blk.cfe_out_bn);
  }

  enc_w3_ = init_weight({f / 2, c, p, 3}, c * p * 3);
  enc_b3_ = Tensor<T>(Shape{f / 2}, T(0), true);
  enc_w5_ = init_weight({f / 2, c, p, 5}, c * p * 5);
  enc_b5_ = Tensor<T>(Shape{f / 2}, T(0), true);
  enc_bn_ = std::make_unique<BatchNormState<T>>(f);
  register_param("encoder.conv3.weight", enc_w3_);
  register_param("encoder.conv3.bias", enc_b3_);
  register_param("encoder.conv5.weight", enc_w5_);
  register_param("encoder.conv5.bias", enc_b5_);
  register_bn("encoder.bn", *enc_bn_);

  const std::size_t flat = f * t;
  fc1_w_ = init_weight({flat, cfg_.fc1}, flat);
  fc1_b_ = Tensor<T>(Shape{cfg_.fc1}, T(0), true);
  fc2_w_ = init_weight({cfg_.fc1, cfg_.fc2}, cfg_.fc1);
  fc2_b_ = Tensor<T>(Shape{cfg_.fc2}, T(0), true);
  fc3_w_ = init_weight({cfg_.fc2, cfg_.num_classes}, cfg_.fc2);
  fc3_b_ = Tensor<T>(Shape{cfg_.num_classes}, T(0), true);
  register_param("classifier.fc1.weight", fc1_w_);
  register_param("classifier.fc1.bias", fc1_b_);
  register_param("classifier.fc2.weight", fc2_w_);
  register_param("classifier.fc2.bias", fc2_b_);
  register_param("classifier.fc3.weight", fc3_w_);
  register_param("classifier.fc3.bias", fc3_b_);
}

template <typename T>
Tensor<T> ConvTransformerModel<T>::lfe_forward(const Tensor<T>& x, Mode mode) {
  if (x.shape().size() != 5 || x.shape()[1] != 1 ||
      x.shape()[2] != cfg_.mesh_size || x.shape()[3] != cfg_.mesh_size)
    throw std::invalid_argument("lfe: expected B x 1 x " +
                                std::to_string(cfg_.mesh_size) + " x " +
                                std::to_string(cfg_.mesh_size) + " x T input");
  auto [p3f, p3b] = same_temporal_padding(3);
  auto [p5f, p5b] = same_temporal_padding(5);
  auto y3 = conv3d(x, lfe_w3_, lfe_b3_, cfg_.spatial_stride, p3f, p3b);
  auto y5 = conv3d(x, lfe_w5_, lfe_b5_, cfg_.spatial_stride, p5f, p5b);
  auto y = elu(batchnorm(concat<T>({y3, y5}, 1), *lfe_bn_, mode));
  const std::size_t b = y.shape()[0];
  return reshape(y, {b, cfg_.local_channels, cfg_.patches(),
                     y.shape()[4]});
}

template <typename T>
Tensor<T> ConvTransformerModel<T>::attention_head(const Tensor<T>& x,
                                                  int ct_index,
                                                  std::size_t head,
                                                  ForwardTrace* trace) {
  auto& blk = *ct_[ct_index - 1];
  const std::size_t b = x.shape()[0], p = x.shape()[2], t = x.shape()[3];
  const std::size_t d = cfg_.head_dim;
  // bias-free point-wise projections into the head space
  auto q = conv_pt(x, blk.q_w[head], 0, 0);
  auto k = conv_pt(x, blk.k_w[head], 0, 0);
  auto v = conv_pt(x, blk.v_w[head], 0, 0);
  auto fold = [&](const Tensor<T>& z) {
    return reshape(permute(z, {0, 2, 1, 3}), {b, p, d * t});
  };
  auto qf = fold(q), kf = fold(k), vf = fold(v);
  auto scores =
      scale(bmm(qf, kf, true),
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(d * t))));
  auto attn = softmax(scores, 2);  // over the key patches
  if (trace && trace->capture_ct == ct_index) trace->attention.push_back(attn);
  auto context = bmm(attn, vf);
  return permute(reshape(context, {b, p, d, t}), {0, 2, 1, 3});
}

template <typename T>
Tensor<T> ConvTransformerModel<T>::mha_block(const Tensor<T>& x, int ct_index,
                                             Mode mode, ForwardTrace* trace) {
  std::vector<Tensor<T>> heads;
  heads.reserve(cfg_.heads);
  for (std::size_t h = 0; h < cfg_.heads; ++h)
    heads.push_back(attention_head(x, ct_index, h, trace));
  auto heads_concat = concat(heads, 1);  // back to C channels
  if (trace && trace->capture_ct == ct_index) {
    trace->head_outputs = heads;
    trace->heads_concat = heads_concat;
  }
  // no output projection: the concatenation feeds the residual directly
  return batchnorm(add(heads_concat, x), ct_[ct_index - 1]->mha_bn, mode);
}

template <typename T>
Tensor<T> ConvTransformerModel<T>::cfe_forward(const Tensor<T>& x,
                                               int ct_index, Mode mode) {
  auto& blk = *ct_[ct_index - 1];
  auto [p3f, p3b] = same_temporal_padding(3);
  auto [p5f, p5b] = same_temporal_padding(5);
  auto y3 = conv_pt(x, blk.cfe_w3, blk.cfe_b3, p3f, p3b);
  auto y5 = conv_pt(x, blk.cfe_w5, blk.cfe_b5, p5f, p5b);
  auto expanded = elu(batchnorm(concat<T>({y3, y5}, 1), blk.expand_bn, mode));
  auto back = conv_pt(expanded, blk.cfe_pw, 0, 0);  // back to C channels
  return batchnorm(add(back, x), blk.cfe_out_bn, mode);
}

template <typename T>
Tensor<T> ConvTransformerModel<T>::forward(const Tensor<T>& x, Mode mode,
                                           std::uint64_t step,
                                           ForwardTrace* trace) {
  auto record = [&](const char* name, const Tensor<T>& v) {
    if (trace) trace->shapes.emplace_back(name, v.shape());
  };
  record("input", x);
  auto h = lfe_forward(x, mode);
  record("lfe", h);
  for (int m = 1; m <= 2; ++m) {
    h = mha_block(h, m, mode, trace);
    record(("ct" + std::to_string(m) + ".mha").c_str(), h);
    h = cfe_forward(h, m, mode);
    record(("ct" + std::to_string(m) + ".cfe").c_str(), h);
  }
  auto [p3f, p3b] = same_temporal_padding(3);
  auto [p5f, p5b] = same_temporal_padding(5);
  auto e3 = conv_pt(h, enc_w3_, enc_b3_, p3f, p3b);
  auto e5 = conv_pt(h, enc_w5_, enc_b5_, p5f, p5b);
  auto enc = elu(batchnorm(concat<T>({e3, e5}, 1), *enc_bn_, mode));
  record("encoder", enc);
  const std::size_t b = enc.shape()[0];
  auto flat = reshape(enc, {b, cfg_.final_channels * cfg_.time_frames});
  auto z1 = relu(dropout(linear(flat, fc1_w_, fc1_b_), 0.5, mode, seed_, 0,
                         step));
  auto z2 = relu(dropout(linear(z1, fc2_w_, fc2_b_), 0.5, mode, seed_, 1,
                         step));
  auto logits = linear(z2, fc3_w_, fc3_b_);
  record("logits", logits);
  return logits;
}

template <typename T>
std::vector<Tensor<T>> ConvTransformerModel<T>::collect_head_representations(
    const Tensor<T>& x, int ct_index) {
  if (ct_index != 1 && ct_index != 2)
    throw std::invalid_argument("collect_head_representations: ct_index must "
                                "be 1 or 2");
  NoGradGuard guard;
  ForwardTrace trace;
  trace.capture_ct = ct_index;
  (void)forward(x, Mode::eval, 0, &trace);
  return trace.head_outputs;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>>
ConvTransformerModel<T>::buffers() {
  return buffers_;
}

template <typename T>
std::size_t ConvTransformerModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.size();
  return n;
}

template <typename T>
std::map<std::string, std::size_t>
ConvTransformerModel<T>::parameter_breakdown() const {
  std::map<std::string, std::size_t> out;
  for (const auto& [name, p] : params_)
    out[name.substr(0, name.find('.'))] += p.size();
  return out;
}

template <typename T>
void ConvTransformerModel<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template class ConvTransformerModel<float>;
template class ConvTransformerModel<double>;

}  // namespace ct
