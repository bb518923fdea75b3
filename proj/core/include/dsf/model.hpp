#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsf/cells.hpp"
#include "dsf/feedback.hpp"
#include "dsf/tensor.hpp"
#include "dsf/tokens.hpp"

// Recurrent language model: embedding, a stack of recurrent layers, an
// optional pre-norm feed-forward block per layer ("transformer-like"), and a
// linear softmax head. The backward pass is exact everywhere except the time
// recursion inside each recurrent layer, which is delegated to the chosen
// feedback engine.
//
// Activations are time-major: row t*B + b of every sequence tensor belongs to
// step t of batch element b.
namespace dsf::model {

using cells::CellKind;
using feedback::EngineKind;
using numerics::Tensor2;

struct ModelConfig {
  CellKind cell_kind = CellKind::GRU;
  std::size_t num_layers = 3;
  std::size_t hidden = 256;
  std::size_t vocab_size = 10000;
  std::size_t context = 64;
  bool skip_connections = true;
  bool transformer_like = false;
  EngineKind engine = EngineKind::Bptt;
  std::uint64_t seed = 1234;

  // Throws ShapeError naming the offending field.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  cells::CellParams cell;
  Tensor2 proj;  // LSTM only: 2d x d, maps [c ; h] back to width d
  // transformer_like only
  Tensor2 norm1_gain, norm1_bias;
  Tensor2 norm2_gain, norm2_bias;
  Tensor2 ff_in, ff_in_bias;    // d x 4d, 1 x 4d
  Tensor2 ff_out, ff_out_bias;  // 4d x d, 1 x d
};

// Every trainable tensor. Also the shape of a parameter gradient.
struct ModelWeights {
  Tensor2 embedding;  // vocab x d
  std::vector<LayerWeights> layers;
  Tensor2 final_norm_gain, final_norm_bias;  // transformer_like only
  Tensor2 head;       // d x vocab
  Tensor2 head_bias;  // 1 x vocab

  // Visits the non-empty tensors in declaration order as fn(name, tensor).
  void for_each_tensor(const std::function<void(const std::string&, Tensor2&)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Tensor2&)>& fn) const;

  ModelWeights zeros_like() const;
  std::size_t parameter_count() const;
  friend bool operator==(const ModelWeights&, const ModelWeights&);
};

using ParamGrads = ModelWeights;

struct ModelParams {
  ModelConfig config;
  ModelWeights weights;
  // One fixed feedback vector per layer (width d, 2d for LSTM); not trainable.
  std::vector<feedback::FeedbackMatrix> feedback;
};

ModelParams init_params(const ModelConfig& config);

struct NormCache {
  Tensor2 xhat;     // normalised input
  Tensor2 inv_std;  // rows x 1
};

struct LayerTrace {
  Tensor2 input;  // layer input u
  cells::LayerRun run;
  // transformer_like only
  NormCache norm1;
  NormCache norm2;
  Tensor2 norm2_out;
  Tensor2 ff_pre;
  Tensor2 ff_act;
};

struct ForwardTrace {
  std::size_t batch = 0;
  std::size_t steps = 0;
  TokenGrid tokens;
  std::vector<LayerTrace> layers;
  Tensor2 head_input;  // final features fed to the head
  NormCache final_norm;
};

struct ForwardResult {
  Tensor2 logits;  // (T*B) x vocab, time-major
  ForwardTrace trace;
};

// Throws ShapeError naming the first out-of-range token position.
ForwardResult forward(const ModelParams& params, const TokenGrid& tokens);

struct LossResult {
  double mean_nll = 0.0;
  Tensor2 dlogits;  // d mean_nll / d logits
};

// Mean token cross-entropy of time-major logits against B x T targets.
LossResult loss_and_errors(const Tensor2& logits, const TokenGrid& targets);

// FFT kernel caches, one per layer; reusable across steps.
class KernelCaches {
 public:
  explicit KernelCaches(const ModelParams& params);
  feedback::DsfKernelCache& layer(std::size_t i) { return caches_.at(i); }

 private:
  std::vector<feedback::DsfKernelCache> caches_;
};

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace, const Tensor2& dlogits, EngineKind engine,
                    KernelCaches* kernels = nullptr);

// Forward + loss only.
double evaluate_loss(const ModelParams& params, const Batch& batch);

// Greedy next-token continuation of `prompt` (one sequence); smoke-test aid.
std::vector<TokenId> greedy_sample(const ModelParams& params, std::vector<TokenId> prompt, std::size_t count);

}  // namespace dsf::model
