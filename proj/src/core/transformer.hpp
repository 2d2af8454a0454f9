#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optim.hpp"
#include "tensor.hpp"

namespace convrec {

struct DecoderConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int max_positions = 256;
  int vocab_size = 0;  // filled once the vocabulary is built
  double dropout = 0.0;

  void validate() const;
};

enum class MaskRegime { Causal, Ranking, Full };

// Square boolean matrix over sequence positions; entry (i,j) says whether
// position i may attend to position j.
struct AttentionMask {
  int n = 0;
  std::vector<uint8_t> allowed;  // n*n, row-major

  bool at(int i, int j) const {
    return allowed[static_cast<size_t>(i) * n + j] != 0;
  }
  // Additive score bias: 0 where allowed, -1e9 where blocked. exp() of a
  // blocked score underflows to exactly 0, which keeps masked positions
  // bit-invisible to the softmax.
  Tensor bias() const;
};

// Causal: (i,j) allowed iff j <= i.
// Ranking over [context | candidate block]: context rows stay causal and are
// blocked from candidates; candidate rows see all context and every candidate.
// Full: everything allowed (bidirectional encoder).
AttentionMask build_mask(MaskRegime regime, int context_len,
                         int candidate_count = 0);

// Pre-LN residual transformer shared by the decoder and the item encoders;
// token+position embedding is owned by the caller.
struct TransformerStack {
  struct Layer {
    Tensor ln1_g, ln1_b;
    Tensor w_qkv, b_qkv;  // d_model x 3*d_model
    Tensor w_proj, b_proj;
    Tensor ln2_g, ln2_b;
    Tensor w_fc, b_fc;  // d_model x d_ff
    Tensor w_out, b_out;
  };

  int d_model = 0;
  int n_heads = 0;
  std::vector<Layer> layers;
  Tensor lnf_g, lnf_b;

  void init(int n_layers, int d_model, int n_heads, int d_ff, Rng& rng);
  void register_params(ParamSet& ps, const std::string& prefix) const;
  // x: L x d_model embeddings (token + position already summed)
  Tensor forward(const Tensor& x, const AttentionMask& mask,
                 double dropout_rate = 0.0, Rng* dropout_rng = nullptr) const;
};

}  // namespace convrec
