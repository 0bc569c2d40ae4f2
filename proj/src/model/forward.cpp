// SPDX-License-Identifier: Apache-2.0
#include "layerlens/model/forward.hpp"

#include <cmath>
#include <limits>

#include "layerlens/error.hpp"

namespace layerlens::model {

using numerics::add_inplace;
using numerics::add_row_bias;
using numerics::matmul;
using numerics::matmul_transposed_a;
using numerics::matmul_transposed_b;
using numerics::sum_rows;

Batch Batch::from_sequences(std::span<const TokenSequence> sequences) {
    if (sequences.empty()) throw DataError("cannot build a batch from zero sequences");
    Batch batch;
    batch.batch_size = sequences.size();
    for (const auto& s : sequences) {
        if (s.empty()) throw DataError("cannot batch an empty sequence");
        batch.seq_len = std::max(batch.seq_len, s.size());
    }
    batch.ids.assign(batch.batch_size * batch.seq_len, kPad);
    for (std::size_t b = 0; b < sequences.size(); ++b) {
        std::copy(sequences[b].begin(), sequences[b].end(), batch.ids.begin() + b * batch.seq_len);
    }
    return batch;
}

namespace {

template <typename T>
BasicTensor<T> dropout_mask(const Shape& dims, double rate, numerics::Rng& rng) {
    BasicTensor<T> mask(dims);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : mask.data()) v = rng.uniform() < rate ? T(0) : keep_scale;
    return mask;
}

template <typename T>
void multiply_inplace(BasicTensor<T>& x, const BasicTensor<T>& mask) {
    if (mask.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

template <typename T>
BasicTensor<T> multiplied(BasicTensor<T> x, const BasicTensor<T>& mask) {
    multiply_inplace(x, mask);
    return x;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    auto y = matmul(x, w);
    add_row_bias(y, b);
    return y;
}

/// dW += x^T dy, db += colsum(dy); returns dy W^T.
template <typename T>
BasicTensor<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy,
                              BasicTensor<T>& dw, BasicTensor<T>& db) {
    add_inplace(dw, matmul_transposed_a(x, dy));
    add_inplace(db, sum_rows(dy));
    return matmul_transposed_b(dy, w);
}

struct AttentionDims {
    std::size_t batch, seq, heads, head_dim, d_model;
};

template <typename T>
void attention_forward(const AttentionDims& a, const Batch& batch, LayerTrace<T>& t, double dropout,
                       numerics::Rng* rng) {
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(a.head_dim)));
    const T neg_inf = -std::numeric_limits<T>::infinity();
    BasicTensor<T> scores({a.batch, a.heads, a.seq, a.seq});
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            const std::size_t off = h * a.head_dim;
            for (std::size_t i = 0; i < a.seq; ++i) {
                const T* q = &t.query[(b * a.seq + i) * a.d_model + off];
                T* srow = &scores[((b * a.heads + h) * a.seq + i) * a.seq];
                for (std::size_t j = 0; j < a.seq; ++j) {
                    if (batch.at(b, j) == kPad) {
                        srow[j] = neg_inf;
                        continue;
                    }
                    const T* k = &t.key[(b * a.seq + j) * a.d_model + off];
                    T acc = 0;
                    for (std::size_t c = 0; c < a.head_dim; ++c) acc += q[c] * k[c];
                    srow[j] = acc * scale;
                }
            }
        }
    }
    t.attention_probs = numerics::softmax(scores, 3);
    if (rng != nullptr) t.attention_dropout = dropout_mask<T>(t.attention_probs.dims(), dropout, *rng);

    t.context = BasicTensor<T>({batch.rows(), a.d_model});
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            const std::size_t off = h * a.head_dim;
            for (std::size_t i = 0; i < a.seq; ++i) {
                const std::size_t prow = ((b * a.heads + h) * a.seq + i) * a.seq;
                T* ctx = &t.context[(b * a.seq + i) * a.d_model + off];
                for (std::size_t j = 0; j < a.seq; ++j) {
                    T p = t.attention_probs[prow + j];
                    if (!t.attention_dropout.empty()) p *= t.attention_dropout[prow + j];
                    if (p == T(0)) continue;
                    const T* v = &t.value[(b * a.seq + j) * a.d_model + off];
                    for (std::size_t c = 0; c < a.head_dim; ++c) ctx[c] += p * v[c];
                }
            }
        }
    }
}

template <typename T>
void attention_backward(const AttentionDims& a, const LayerTrace<T>& t, const BasicTensor<T>& dctx,
                        BasicTensor<T>& dq, BasicTensor<T>& dk, BasicTensor<T>& dv) {
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(a.head_dim)));
    BasicTensor<T> dprobs(t.attention_probs.dims());
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            const std::size_t off = h * a.head_dim;
            for (std::size_t i = 0; i < a.seq; ++i) {
                const std::size_t prow = ((b * a.heads + h) * a.seq + i) * a.seq;
                const T* g = &dctx[(b * a.seq + i) * a.d_model + off];
                for (std::size_t j = 0; j < a.seq; ++j) {
                    const T mask = t.attention_dropout.empty() ? T(1) : t.attention_dropout[prow + j];
                    const T p = t.attention_probs[prow + j] * mask;
                    const T* v = &t.value[(b * a.seq + j) * a.d_model + off];
                    T* gv = &dv[(b * a.seq + j) * a.d_model + off];
                    T acc = 0;
                    for (std::size_t c = 0; c < a.head_dim; ++c) {
                        acc += g[c] * v[c];
                        gv[c] += p * g[c];
                    }
                    dprobs[prow + j] = acc * mask;
                }
            }
        }
    }
    const auto dscores = numerics::softmax_backward(t.attention_probs, dprobs, 3);
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            const std::size_t off = h * a.head_dim;
            for (std::size_t i = 0; i < a.seq; ++i) {
                const std::size_t prow = ((b * a.heads + h) * a.seq + i) * a.seq;
                const T* q = &t.query[(b * a.seq + i) * a.d_model + off];
                T* gq = &dq[(b * a.seq + i) * a.d_model + off];
                for (std::size_t j = 0; j < a.seq; ++j) {
                    const T ds = dscores[prow + j] * scale;
                    if (ds == T(0)) continue;
                    const T* k = &t.key[(b * a.seq + j) * a.d_model + off];
                    T* gk = &dk[(b * a.seq + j) * a.d_model + off];
                    for (std::size_t c = 0; c < a.head_dim; ++c) {
                        gq[c] += ds * k[c];
                        gk[c] += ds * q[c];
                    }
                }
            }
        }
    }
}

template <typename T>
BasicTensor<T> layer_forward(const ModelConfig& cfg, const EncoderLayerWeights<T>& w, const Batch& batch,
                             BasicTensor<T> x, LayerTrace<T>& t, numerics::Rng* rng) {
    const AttentionDims ad{batch.batch_size, batch.seq_len, cfg.n_heads, cfg.head_dim(), cfg.d_model};
    const T eps = static_cast<T>(cfg.layer_norm_eps);
    t.query = dense(x, w.query_weight, w.query_bias);
    t.key = dense(x, w.key_weight, w.key_bias);
    t.value = dense(x, w.value_weight, w.value_bias);
    attention_forward(ad, batch, t, cfg.dropout_rate, rng);

    auto attn = dense(t.context, w.attention_output_weight, w.attention_output_bias);
    if (rng != nullptr) {
        t.attention_out_dropout = dropout_mask<T>(attn.dims(), cfg.dropout_rate, *rng);
        multiply_inplace(attn, t.attention_out_dropout);
    }
    add_inplace(attn, x);
    t.input = std::move(x);
    t.attention_norm = numerics::layer_norm(attn, w.attention_norm_gain, w.attention_norm_bias, eps);

    const auto& h1 = t.attention_norm.output;
    t.ffn_pre = dense(h1, w.ffn_in_weight, w.ffn_in_bias);
    t.ffn_act = numerics::gelu(t.ffn_pre);
    auto ffn = dense(t.ffn_act, w.ffn_out_weight, w.ffn_out_bias);
    if (rng != nullptr) {
        t.ffn_out_dropout = dropout_mask<T>(ffn.dims(), cfg.dropout_rate, *rng);
        multiply_inplace(ffn, t.ffn_out_dropout);
    }
    add_inplace(ffn, h1);
    t.ffn_norm = numerics::layer_norm(ffn, w.ffn_norm_gain, w.ffn_norm_bias, eps);
    return t.ffn_norm.output;
}

template <typename T>
BasicTensor<T> layer_backward(const ModelConfig& cfg, const EncoderLayerWeights<T>& w, const Batch& batch,
                              const LayerTrace<T>& t, const BasicTensor<T>& dout, EncoderLayerWeights<T>& g) {
    const AttentionDims ad{batch.batch_size, batch.seq_len, cfg.n_heads, cfg.head_dim(), cfg.d_model};

    auto g2 = numerics::layer_norm_backward(dout, t.ffn_norm, w.ffn_norm_gain);
    add_inplace(g.ffn_norm_gain, g2.gain);
    add_inplace(g.ffn_norm_bias, g2.bias);
    BasicTensor<T> dh1 = g2.input;
    auto dffn = multiplied(std::move(g2.input), t.ffn_out_dropout);
    auto dact = dense_backward(t.ffn_act, w.ffn_out_weight, dffn, g.ffn_out_weight, g.ffn_out_bias);
    auto dpre = numerics::gelu_backward(t.ffn_pre, dact);
    add_inplace(dh1, dense_backward(t.attention_norm.output, w.ffn_in_weight, dpre, g.ffn_in_weight, g.ffn_in_bias));

    auto g1 = numerics::layer_norm_backward(dh1, t.attention_norm, w.attention_norm_gain);
    add_inplace(g.attention_norm_gain, g1.gain);
    add_inplace(g.attention_norm_bias, g1.bias);
    BasicTensor<T> dx = g1.input;
    auto dattn = multiplied(std::move(g1.input), t.attention_out_dropout);
    auto dctx =
        dense_backward(t.context, w.attention_output_weight, dattn, g.attention_output_weight, g.attention_output_bias);

    BasicTensor<T> dq(t.query.dims()), dk(t.key.dims()), dv(t.value.dims());
    attention_backward(ad, t, dctx, dq, dk, dv);
    add_inplace(dx, dense_backward(t.input, w.query_weight, dq, g.query_weight, g.query_bias));
    add_inplace(dx, dense_backward(t.input, w.key_weight, dk, g.key_weight, g.key_bias));
    add_inplace(dx, dense_backward(t.input, w.value_weight, dv, g.value_weight, g.value_bias));
    return dx;
}

}  // namespace

template <typename T>
void validate_batch(const BasicModel<T>& model, const Batch& batch) {
    const auto& cfg = model.config();
    if (batch.seq_len > cfg.max_seq_len) {
        throw RangeError("sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                         std::to_string(cfg.max_seq_len));
    }
    if (batch.ids.size() != batch.rows() || batch.rows() == 0) throw DataError("malformed batch");
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        if (batch.at(b, 0) == kPad) throw DataError("batch row " + std::to_string(b) + " starts with [PAD]");
    }
    for (TokenId id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(cfg.vocab_size));
        }
    }
}

template <typename T>
EncoderTrace<T> encode(const BasicModel<T>& model, const Batch& batch, bool train_mode, numerics::Rng* rng) {
    validate_batch(model, batch);
    const auto& cfg = model.config();
    const bool dropout = train_mode && cfg.dropout_rate > 0.0;
    if (dropout && rng == nullptr) throw ConfigError("train-mode forward with dropout needs a random source");
    numerics::Rng* drop_rng = dropout ? rng : nullptr;

    EncoderTrace<T> trace;
    trace.batch = batch;
    const std::size_t d = cfg.d_model;
    const auto& emb = model.embeddings();
    BasicTensor<T> e({batch.rows(), d});
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        for (std::size_t s = 0; s < batch.seq_len; ++s) {
            const std::size_t r = b * batch.seq_len + s;
            auto tok = emb.token.row(static_cast<std::size_t>(batch.ids[r]));
            auto pos = emb.position.row(s);
            auto out = e.row(r);
            for (std::size_t c = 0; c < d; ++c) out[c] = tok[c] + pos[c];
        }
    }
    trace.embedding_norm =
        numerics::layer_norm(e, emb.norm_gain, emb.norm_bias, static_cast<T>(cfg.layer_norm_eps));
    BasicTensor<T> x = trace.embedding_norm.output;
    if (drop_rng != nullptr) {
        trace.embedding_dropout = dropout_mask<T>(x.dims(), cfg.dropout_rate, *drop_rng);
        multiply_inplace(x, trace.embedding_dropout);
    }
    const Shape stack_dims{batch.batch_size, batch.seq_len, d};
    trace.stack.layers.reserve(model.depth() + 1);
    trace.stack.layers.push_back(x.reshaped(stack_dims));
    trace.steps.resize(model.depth());
    for (std::size_t step = 0; step < model.depth(); ++step) {
        x = layer_forward(cfg, model.layer_at(step), batch, std::move(x), trace.steps[step], drop_rng);
        trace.stack.layers.push_back(x.reshaped(stack_dims));
    }
    return trace;
}

template <typename T>
HiddenStateStack<T> forward_all_layers(const BasicModel<T>& model, const Batch& batch, bool train_mode,
                                       numerics::Rng* rng) {
    return std::move(encode(model, batch, train_mode, rng).stack);
}

template <typename T>
BasicTensor<T> apply_layer(const ModelConfig& config, const EncoderLayerWeights<T>& layer, const Batch& batch,
                           const BasicTensor<T>& hidden) {
    const Shape dims{batch.batch_size, batch.seq_len, config.d_model};
    if (hidden.dims() != dims) {
        throw ShapeError("apply_layer expects " + numerics::shape_to_string(dims) + ", got " +
                         numerics::shape_to_string(hidden.dims()));
    }
    LayerTrace<T> trace;
    return layer_forward(config, layer, batch, hidden.reshaped({batch.rows(), config.d_model}), trace,
                         static_cast<numerics::Rng*>(nullptr))
        .reshaped(dims);
}

template <typename T>
void encoder_backward(const BasicModel<T>& model, const EncoderTrace<T>& trace, const BasicTensor<T>& d_final,
                      BasicModel<T>& grads) {
    const auto& cfg = model.config();
    const Batch& batch = trace.batch;
    BasicTensor<T> dx = d_final.reshaped({batch.rows(), cfg.d_model});
    for (std::size_t step = model.depth(); step-- > 0;) {
        dx = layer_backward(cfg, model.layer_at(step), batch, trace.steps[step], dx, grads.layer_at(step));
    }
    multiply_inplace(dx, trace.embedding_dropout);
    const auto& emb = model.embeddings();
    auto ge = numerics::layer_norm_backward(dx, trace.embedding_norm, emb.norm_gain);
    auto& gemb = grads.embeddings();
    add_inplace(gemb.norm_gain, ge.gain);
    add_inplace(gemb.norm_bias, ge.bias);
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
        for (std::size_t s = 0; s < batch.seq_len; ++s) {
            const std::size_t r = b * batch.seq_len + s;
            auto src = ge.input.row(r);
            auto tok = gemb.token.row(static_cast<std::size_t>(batch.ids[r]));
            auto pos = gemb.position.row(s);
            for (std::size_t c = 0; c < cfg.d_model; ++c) {
                tok[c] += src[c];
                pos[c] += src[c];
            }
        }
    }
}

template <typename T>
MlmTrace<T> mlm_forward(const BasicModel<T>& model, const BasicTensor<T>& hidden) {
    const auto& cfg = model.config();
    if (hidden.cols() != cfg.d_model) {
        throw ShapeError("mlm_decode: hidden dims " + numerics::shape_to_string(hidden.dims()) +
                         " do not end in d_model " + std::to_string(cfg.d_model));
    }
    const auto& head = model.mlm_head();
    MlmTrace<T> t;
    t.input = hidden.reshaped({hidden.rows(), cfg.d_model});
    t.pre_act = dense(t.input, head.transform_weight, head.transform_bias);
    t.act = numerics::gelu(t.pre_act);
    t.norm = numerics::layer_norm(t.act, head.norm_gain, head.norm_bias, static_cast<T>(cfg.layer_norm_eps));
    t.logits = matmul_transposed_b(t.norm.output, model.output_projection());
    add_row_bias(t.logits, head.output_bias);
    Shape out_dims = hidden.dims();
    out_dims.back() = cfg.vocab_size;
    t.logits = std::move(t.logits).reshaped(out_dims);
    return t;
}

template <typename T>
BasicTensor<T> mlm_decode(const BasicModel<T>& model, const BasicTensor<T>& hidden) {
    return std::move(mlm_forward(model, hidden).logits);
}

template <typename T>
BasicTensor<T> mlm_backward(const BasicModel<T>& model, const MlmTrace<T>& trace, const BasicTensor<T>& dlogits,
                            BasicModel<T>& grads) {
    const auto& cfg = model.config();
    const auto& head = model.mlm_head();
    auto& gh = grads.mlm_head();
    const auto dl = dlogits.reshaped({trace.input.rows(), cfg.vocab_size});
    add_inplace(gh.output_bias, sum_rows(dl));
    add_inplace(grads.output_projection(), matmul_transposed_a(dl, trace.norm.output));
    auto dnorm = matmul(dl, model.output_projection());
    auto gn = numerics::layer_norm_backward(dnorm, trace.norm, head.norm_gain);
    add_inplace(gh.norm_gain, gn.gain);
    add_inplace(gh.norm_bias, gn.bias);
    auto dpre = numerics::gelu_backward(trace.pre_act, gn.input);
    return dense_backward(trace.input, head.transform_weight, dpre, gh.transform_weight, gh.transform_bias);
}

template <typename T>
std::vector<TokenId> argmax_tokens(const BasicTensor<T>& logits) {
    std::vector<TokenId> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        out[r] = static_cast<TokenId>(numerics::argmax(logits.row(r)));
    }
    return out;
}

#define LAYERLENS_INSTANTIATE_FORWARD(T)                                                                     \
    template void validate_batch(const BasicModel<T>&, const Batch&);                                       \
    template EncoderTrace<T> encode(const BasicModel<T>&, const Batch&, bool, numerics::Rng*);              \
    template HiddenStateStack<T> forward_all_layers(const BasicModel<T>&, const Batch&, bool, numerics::Rng*); \
    template BasicTensor<T> apply_layer(const ModelConfig&, const EncoderLayerWeights<T>&, const Batch&,    \
                                        const BasicTensor<T>&);                                             \
    template void encoder_backward(const BasicModel<T>&, const EncoderTrace<T>&, const BasicTensor<T>&,     \
                                   BasicModel<T>&);                                                         \
    template MlmTrace<T> mlm_forward(const BasicModel<T>&, const BasicTensor<T>&);                          \
    template BasicTensor<T> mlm_decode(const BasicModel<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> mlm_backward(const BasicModel<T>&, const MlmTrace<T>&, const BasicTensor<T>&,   \
                                         BasicModel<T>&);                                                   \
    template std::vector<TokenId> argmax_tokens(const BasicTensor<T>&);

LAYERLENS_INSTANTIATE_FORWARD(float)
LAYERLENS_INSTANTIATE_FORWARD(double)

#undef LAYERLENS_INSTANTIATE_FORWARD

}  // namespace layerlens::model
