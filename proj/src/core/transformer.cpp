#include "transformer.hpp"

#include <cmath>

namespace convrec {

void DecoderConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 ||
      max_positions < 1)
    throw ConfigError("model dims must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must be in [0,1)");
}

Tensor AttentionMask::bias() const {
  Tensor b = Tensor::zeros({n, n});
  auto& v = b.values();
  for (size_t k = 0; k < v.size(); ++k)
    if (!allowed[k]) v[k] = -1e9;
  return b;
}

AttentionMask build_mask(MaskRegime regime, int context_len,
                         int candidate_count) {
  if (context_len < 0 || candidate_count < 0)
    throw ShapeError("build_mask: negative length");
  AttentionMask m;
  if (regime == MaskRegime::Causal || regime == MaskRegime::Full)
    candidate_count = 0;
  m.n = context_len + (regime == MaskRegime::Ranking ? candidate_count : 0);
  m.allowed.assign(static_cast<size_t>(m.n) * m.n, 0);
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.n; ++j) {
      bool ok = false;
      switch (regime) {
        case MaskRegime::Full:
          ok = true;
          break;
        case MaskRegime::Causal:
          ok = j <= i;
          break;
        case MaskRegime::Ranking:
          if (i < context_len)
            ok = j <= i;  // causal inside context, blocked from candidates
          else
            ok = true;  // candidates see all context and every candidate
          break;
      }
      m.allowed[static_cast<size_t>(i) * m.n + j] = ok ? 1 : 0;
    }
  }
  return m;
}

void TransformerStack::init(int n_layers, int d_model_, int n_heads_, int d_ff,
                            Rng& rng) {
  d_model = d_model_;
  n_heads = n_heads_;
  layers.clear();
  const double s = 0.02;
  for (int l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.ln1_g = Tensor::full({1, d_model}, 1.0, true);
    layer.ln1_b = Tensor::zeros({1, d_model}, true);
    layer.w_qkv = Tensor::randn({d_model, 3 * d_model}, rng, s, true);
    layer.b_qkv = Tensor::zeros({1, 3 * d_model}, true);
    layer.w_proj = Tensor::randn({d_model, d_model}, rng, s, true);
    layer.b_proj = Tensor::zeros({1, d_model}, true);
    layer.ln2_g = Tensor::full({1, d_model}, 1.0, true);
    layer.ln2_b = Tensor::zeros({1, d_model}, true);
    layer.w_fc = Tensor::randn({d_model, d_ff}, rng, s, true);
    layer.b_fc = Tensor::zeros({1, d_ff}, true);
    layer.w_out = Tensor::randn({d_ff, d_model}, rng, s, true);
    layer.b_out = Tensor::zeros({1, d_model}, true);
    layers.push_back(std::move(layer));
  }
  lnf_g = Tensor::full({1, d_model}, 1.0, true);
  lnf_b = Tensor::zeros({1, d_model}, true);
}

void TransformerStack::register_params(ParamSet& ps,
                                       const std::string& prefix) const {
  for (size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    std::string p = prefix + ".h" + std::to_string(l) + ".";
    ps.add(p + "ln1.g", L.ln1_g);
    ps.add(p + "ln1.b", L.ln1_b);
    ps.add(p + "attn.w_qkv", L.w_qkv);
    ps.add(p + "attn.b_qkv", L.b_qkv);
    ps.add(p + "attn.w_proj", L.w_proj);
    ps.add(p + "attn.b_proj", L.b_proj);
    ps.add(p + "ln2.g", L.ln2_g);
    ps.add(p + "ln2.b", L.ln2_b);
    ps.add(p + "mlp.w_fc", L.w_fc);
    ps.add(p + "mlp.b_fc", L.b_fc);
    ps.add(p + "mlp.w_out", L.w_out);
    ps.add(p + "mlp.b_out", L.b_out);
  }
  ps.add(prefix + ".lnf.g", lnf_g);
  ps.add(prefix + ".lnf.b", lnf_b);
}

Tensor TransformerStack::forward(const Tensor& x, const AttentionMask& mask,
                                 double dropout_rate, Rng* dropout_rng) const {
  const int L = x.rows();
  if (x.cols() != d_model)
    throw ShapeError("transformer: input width " + shape_str(x.shape()) +
                     " vs d_model (" + std::to_string(d_model) + ")");
  if (mask.n != L)
    throw ShapeError("transformer: mask size (" + std::to_string(mask.n) +
                     "," + std::to_string(mask.n) + ") vs sequence (" +
                     std::to_string(L) + ")");
  const int dh = d_model / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor mask_bias = mask.bias();

  auto drop = [&](const Tensor& t) {
    if (dropout_rate > 0.0 && dropout_rng)
      return dropout(t, dropout_rate, *dropout_rng);
    return t;
  };

  Tensor h = x;
  for (const Layer& layer : layers) {
    // attention block
    Tensor a = add(mul(layer_norm(h), layer.ln1_g), layer.ln1_b);
    Tensor qkv = add(matmul(a, layer.w_qkv), layer.b_qkv);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(n_heads));
    for (int hd = 0; hd < n_heads; ++hd) {
      Tensor q = slice_cols(qkv, hd * dh, dh);
      Tensor k = slice_cols(qkv, d_model + hd * dh, dh);
      Tensor v = slice_cols(qkv, 2 * d_model + hd * dh, dh);
      Tensor scores = add(scale(matmul(q, transpose(k)), att_scale), mask_bias);
      Tensor att = softmax_rows(scores);
      head_outs.push_back(matmul(att, v));
    }
    Tensor merged = n_heads == 1 ? head_outs[0] : concat_cols(head_outs);
    Tensor proj = add(matmul(merged, layer.w_proj), layer.b_proj);
    h = add(h, drop(proj));
    // feed-forward block
    Tensor f = add(mul(layer_norm(h), layer.ln2_g), layer.ln2_b);
    Tensor ff = add(matmul(gelu(add(matmul(f, layer.w_fc), layer.b_fc)),
                           layer.w_out),
                    layer.b_out);
    h = add(h, drop(ff));
  }
  return add(mul(layer_norm(h), lnf_g), lnf_b);
}

}  // namespace convrec
