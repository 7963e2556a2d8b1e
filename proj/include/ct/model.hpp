#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ct/ops.hpp"
#include "ct/variant.hpp"

namespace ct {

// LFE -> 2 x (multi-head region attention + convolutional feature expansion)
// -> convolutional encoder -> 3-layer classifier. No positional encoding:
// patches keep fixed scalp locations.
template <typename T>
class ConvTransformerModel {
 public:
  ConvTransformerModel(VariantConfig cfg, std::uint64_t seed);

  ConvTransformerModel(const ConvTransformerModel&) = delete;
  ConvTransformerModel& operator=(const ConvTransformerModel&) = delete;

  const VariantConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  struct ForwardTrace {
    int capture_ct = 0;  // 1 or 2 captures that module's heads
    std::vector<Tensor<T>> head_outputs;   // H tensors, B x D x P x T
    std::vector<Tensor<T>> attention;      // H tensors, B x P x P
    Tensor<T> heads_concat;                // pre-residual, B x C x P x T
    std::vector<std::pair<std::string, Shape>> shapes;
  };

  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::uint64_t step = 0,
                    ForwardTrace* trace = nullptr);

  // Sub-blocks (exposed for tests and analysis).
  Tensor<T> lfe_forward(const Tensor<T>& x, Mode mode);
  Tensor<T> attention_head(const Tensor<T>& x, int ct_index, std::size_t head,
                           ForwardTrace* trace = nullptr);
  Tensor<T> mha_block(const Tensor<T>& x, int ct_index, Mode mode,
                      ForwardTrace* trace = nullptr);
  Tensor<T> cfe_forward(const Tensor<T>& x, int ct_index, Mode mode);

  // Per-head context outputs of one CT module on x (eval mode, no tape).
  std::vector<Tensor<T>> collect_head_representations(const Tensor<T>& x,
                                                      int ct_index);

  std::vector<std::pair<std::string, Tensor<T>>>& parameters() {
    return params_;
  }
  // BatchNorm running statistics, by name.
  std::vector<std::pair<std::string, std::vector<T>*>> buffers();

  std::size_t parameter_count() const;
  std::map<std::string, std::size_t> parameter_breakdown() const;

  void zero_grad();

  BatchNormState<T>& mha_bn(int ct_index) { return ct_[ct_index - 1]->mha_bn; }
  BatchNormState<T>& cfe_out_bn(int ct_index) {
    return ct_[ct_index - 1]->cfe_out_bn;
  }

 private:
  struct CtBlock {
    std::vector<Tensor<T>> q_w, k_w, v_w;  // per head, D x C x 1 x 1
    BatchNormState<T> mha_bn;
    Tensor<T> cfe_w3, cfe_b3, cfe_w5, cfe_b5;
    BatchNormState<T> expand_bn;
    Tensor<T> cfe_pw;  // C x E x 1 x 1, bias-free
    BatchNormState<T> cfe_out_bn;

    CtBlock(std::size_t c, std::size_t e)
        : mha_bn(c), expand_bn(e), cfe_out_bn(c) {}
  };

  Tensor<T> init_weight(Shape shape, std::size_t fan_in);
  void register_param(const std::string& name, Tensor<T> t);
  void register_bn(const std::string& name, BatchNormState<T>& bn);

  VariantConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t init_stream_ = 0;

  Tensor<T> lfe_w3_, lfe_b3_, lfe_w5_, lfe_b5_;
  std::unique_ptr<BatchNormState<T>> lfe_bn_;
  std::unique_ptr<CtBlock> ct_[2];
  Tensor<T> enc_w3_, enc_b3_, enc_w5_, enc_b5_;
  std::unique_ptr<BatchNormState<T>> enc_bn_;
  Tensor<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_, fc3_w_, fc3_b_;

  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers_;
};

using ModelF = ConvTransformerModel<float>;
using ModelD = ConvTransformerModel<double>;

}  // namespace ct
