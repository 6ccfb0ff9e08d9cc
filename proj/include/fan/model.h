#pragma once

// Feature-aligning network: per-group encoders map raw streams to a (T, D)
// matrix, grouped aligning attention re-times each group's columns inside a
// +/-p frame band, a bidirectional LSTM stack summarizes context, and a
// linear-chain CRF decodes the onset sequence.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fan/autodiff.h"
#include "fan/config.h"
#include "fan/crf.h"
#include "fan/error.h"
#include "fan/features.h"
#include "fan/rng.h"
#include "fan/tensor.h"

namespace fan {

// Input channel planes per step; 0 marks the descriptor-vector groups.
inline std::size_t group_channels(GroupId id) {
    switch (id) {
        case GroupId::frames:
        case GroupId::residuals: return 3;
        case GroupId::optical_flow: return 2;
        case GroupId::scene_change:
        case GroupId::body_pose: return 0;
    }
    return 0;
}

template <typename T>
struct GroupEncoderParams {
    bool image = false;
    // image path: conv stages then a linear readout of the pooled channels
    std::vector<Tensor<T>> conv_w;  // (C_out, C_in, k, k)
    std::vector<Tensor<T>> conv_b;  // (C_out)
    Tensor<T> lin_w;                // (group_width, C_last)
    Tensor<T> lin_b;                // (1, group_width)
    // vector path: two tanh layers
    Tensor<T> fc1_w, fc1_b;  // (fc_hidden, d_in), (1, fc_hidden)
    Tensor<T> fc2_w, fc2_b;  // (group_width, fc_hidden), (1, group_width)
};

template <typename T>
struct LstmDirParams {
    Tensor<T> w_ih;  // (4h, in)
    Tensor<T> w_hh;  // (4h, h)
    Tensor<T> b;     // (1, 4h), gate order i, f, g, o
};

template <typename T>
struct FanParams {
    TrainConfig cfg;
    std::vector<GroupEncoderParams<T>> enc;                // cfg.groups order
    std::vector<Tensor<T>> wq, wk;                         // (D, D) per group
    std::vector<std::array<LstmDirParams<T>, 2>> lstm;     // [layer][0=fwd,1=bwd]
    Tensor<T> em_w, em_b;                                  // (2, 2h), (1, 2)
    Tensor<T> crf_trans, crf_start, crf_end;               // (2,2), (1,2), (1,2)

    // Stable enumeration; the order defines the checkpoint layout and the
    // optimizer state indexing.
    std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
            const std::string base = "enc." + cfg.groups[g] + ".";
            auto& e = enc[g];
            if (e.image) {
                for (std::size_t s = 0; s < e.conv_w.size(); ++s) {
                    const std::string stage = base + "conv" + std::to_string(s);
                    out.emplace_back(stage + ".w", &e.conv_w[s]);
                    out.emplace_back(stage + ".b", &e.conv_b[s]);
                }
                out.emplace_back(base + "lin.w", &e.lin_w);
                out.emplace_back(base + "lin.b", &e.lin_b);
            } else {
                out.emplace_back(base + "fc1.w", &e.fc1_w);
                out.emplace_back(base + "fc1.b", &e.fc1_b);
                out.emplace_back(base + "fc2.w", &e.fc2_w);
                out.emplace_back(base + "fc2.b", &e.fc2_b);
            }
        }
        for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
            out.emplace_back("align." + cfg.groups[g] + ".wq", &wq[g]);
            out.emplace_back("align." + cfg.groups[g] + ".wk", &wk[g]);
        }
        for (std::size_t l = 0; l < lstm.size(); ++l) {
            for (std::size_t d = 0; d < 2; ++d) {
                const std::string base =
                    "lstm.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
                out.emplace_back(base + "w_ih", &lstm[l][d].w_ih);
                out.emplace_back(base + "w_hh", &lstm[l][d].w_hh);
                out.emplace_back(base + "b", &lstm[l][d].b);
            }
        }
        out.emplace_back("em.w", &em_w);
        out.emplace_back("em.b", &em_b);
        out.emplace_back("crf.trans", &crf_trans);
        out.emplace_back("crf.start", &crf_start);
        out.emplace_back("crf.end", &crf_end);
        return out;
    }

    std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const {
        auto mutable_list = const_cast<FanParams*>(this)->named_tensors();
        std::vector<std::pair<std::string, const Tensor<T>*>> out;
        out.reserve(mutable_list.size());
        for (auto& [name, ptr] : mutable_list) out.emplace_back(name, ptr);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named_tensors()) n += t->numel();
        return n;
    }

    template <typename U>
    FanParams<U> cast() const {
        FanParams<U> out;
        out.cfg = cfg;
        out.enc.resize(enc.size());
        for (std::size_t g = 0; g < enc.size(); ++g) {
            out.enc[g].image = enc[g].image;
            for (const auto& w : enc[g].conv_w) out.enc[g].conv_w.push_back(w.template cast<U>());
            for (const auto& b : enc[g].conv_b) out.enc[g].conv_b.push_back(b.template cast<U>());
            if (enc[g].image) {
                out.enc[g].lin_w = enc[g].lin_w.template cast<U>();
                out.enc[g].lin_b = enc[g].lin_b.template cast<U>();
            } else {
                out.enc[g].fc1_w = enc[g].fc1_w.template cast<U>();
                out.enc[g].fc1_b = enc[g].fc1_b.template cast<U>();
                out.enc[g].fc2_w = enc[g].fc2_w.template cast<U>();
                out.enc[g].fc2_b = enc[g].fc2_b.template cast<U>();
            }
        }
        for (const auto& w : wq) out.wq.push_back(w.template cast<U>());
        for (const auto& w : wk) out.wk.push_back(w.template cast<U>());
        out.lstm.resize(lstm.size());
        for (std::size_t l = 0; l < lstm.size(); ++l) {
            for (std::size_t d = 0; d < 2; ++d) {
                out.lstm[l][d].w_ih = lstm[l][d].w_ih.template cast<U>();
                out.lstm[l][d].w_hh = lstm[l][d].w_hh.template cast<U>();
                out.lstm[l][d].b = lstm[l][d].b.template cast<U>();
            }
        }
        out.em_w = em_w.template cast<U>();
        out.em_b = em_b.template cast<U>();
        out.crf_trans = crf_trans.template cast<U>();
        out.crf_start = crf_start.template cast<U>();
        out.crf_end = crf_end.template cast<U>();
        return out;
    }
};

// All tensors allocated at their final shapes, zero filled.
template <typename T>
FanParams<T> make_fan_params(const TrainConfig& cfg) {
    cfg.validate();
    FanParams<T> p;
    p.cfg = cfg;
    const std::size_t gw = cfg.group_width;
    const std::size_t d = cfg.d();
    const std::size_t h = cfg.hidden;
    const auto ids = cfg.group_ids();

    for (const GroupId id : ids) {
        GroupEncoderParams<T> e;
        const std::size_t channels = group_channels(id);
        e.image = channels > 0;
        if (e.image) {
            std::size_t c_in = channels;
            const std::size_t k = cfg.encoder.kernel;
            for (const std::size_t c_out : cfg.encoder.channels) {
                e.conv_w.emplace_back(std::vector<std::size_t>{c_out, c_in, k, k});
                e.conv_b.emplace_back(std::vector<std::size_t>{c_out});
                c_in = c_out;
            }
            e.lin_w = Tensor<T>({gw, c_in});
            e.lin_b = Tensor<T>({1, gw});
        } else {
            const std::size_t d_in =
                id == GroupId::scene_change ? 3 : 3 * cfg.pose_keypoints;
            e.fc1_w = Tensor<T>({cfg.fc_hidden, d_in});
            e.fc1_b = Tensor<T>({1, cfg.fc_hidden});
            e.fc2_w = Tensor<T>({gw, cfg.fc_hidden});
            e.fc2_b = Tensor<T>({1, gw});
        }
        p.enc.push_back(std::move(e));
        p.wq.emplace_back(std::vector<std::size_t>{d, d});
        p.wk.emplace_back(std::vector<std::size_t>{d, d});
    }

    p.lstm.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t in = l == 0 ? d : 2 * h;
        for (std::size_t dir = 0; dir < 2; ++dir) {
            p.lstm[l][dir].w_ih = Tensor<T>({4 * h, in});
            p.lstm[l][dir].w_hh = Tensor<T>({4 * h, h});
            p.lstm[l][dir].b = Tensor<T>({1, 4 * h});
        }
    }
    p.em_w = Tensor<T>({2, 2 * h});
    p.em_b = Tensor<T>({1, 2});
    p.crf_trans = Tensor<T>({2, 2});
    p.crf_start = Tensor<T>({1, 2});
    p.crf_end = Tensor<T>({1, 2});
    return p;
}

namespace detail {

template <typename T>
void fill_fan_in(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
}

}  // namespace detail

// Weights drawn uniform in +/-1/sqrt(fan_in) from a stream derived from
// cfg.seed; biases and the CRF potentials start at zero. The aligning
// projections must not start at zero or every band softmax degenerates into
// the same moving average and the groups cannot differentiate.
template <typename T>
FanParams<T> init_fan_params(const TrainConfig& cfg) {
    FanParams<T> p = make_fan_params<T>(cfg);
    Rng rng = Rng(cfg.seed).derive(0x1417);
    for (auto& e : p.enc) {
        if (e.image) {
            for (std::size_t s = 0; s < e.conv_w.size(); ++s) {
                Tensor<T>& w = e.conv_w[s];
                detail::fill_fan_in(w, w.dim(1) * w.dim(2) * w.dim(3), rng);
            }
            detail::fill_fan_in(e.lin_w, e.lin_w.dim(1), rng);
        } else {
            detail::fill_fan_in(e.fc1_w, e.fc1_w.dim(1), rng);
            detail::fill_fan_in(e.fc2_w, e.fc2_w.dim(1), rng);
        }
    }
    for (std::size_t g = 0; g < p.wq.size(); ++g) {
        detail::fill_fan_in(p.wq[g], p.wq[g].dim(1), rng);
        detail::fill_fan_in(p.wk[g], p.wk[g].dim(1), rng);
    }
    for (auto& layer : p.lstm) {
        for (auto& dir : layer) {
            detail::fill_fan_in(dir.w_ih, dir.w_ih.dim(1), rng);
            detail::fill_fan_in(dir.w_hh, dir.w_hh.dim(1), rng);
        }
    }
    detail::fill_fan_in(p.em_w, p.em_w.dim(1), rng);
    return p;
}

struct EncoderVars {
    std::vector<Var> conv_w, conv_b;
    Var lin_w{}, lin_b{};
    Var fc1_w{}, fc1_b{}, fc2_w{}, fc2_b{};
};

struct LstmDirVars {
    Var w_ih{}, w_hh{}, b{};
};

template <typename T>
struct ModelVars {
    std::vector<EncoderVars> enc;
    std::vector<Var> wq, wk;
    std::vector<std::array<LstmDirVars, 2>> lstm;
    Var em_w{}, em_b{};
    CrfVars<T> crf{};
    // named_tensors() order, for walking gradients next to optimizer state
    std::vector<Var> ordered;
};

// Pushes every parameter onto the tape, as inputs when trainable so the
// backward pass reaches them, as constants for inference.
template <typename T>
ModelVars<T> register_params(Tape<T>& tape, const FanParams<T>& params, bool trainable) {
    ModelVars<T> vars;
    std::map<std::string, Var> by_name;
    for (const auto& [name, tensor] : params.named_tensors()) {
        const Var v = trainable ? tape.input(*tensor) : tape.constant(*tensor);
        vars.ordered.push_back(v);
        by_name.emplace(name, v);
    }
    const auto lookup = [&by_name](const std::string& name) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw contract_error("register_params: unknown tensor " + name);
        }
        return it->second;
    };

    const TrainConfig& cfg = params.cfg;
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        EncoderVars e;
        const std::string base = "enc." + cfg.groups[g] + ".";
        if (params.enc[g].image) {
            for (std::size_t s = 0; s < params.enc[g].conv_w.size(); ++s) {
                const std::string stage = base + "conv" + std::to_string(s);
                e.conv_w.push_back(lookup(stage + ".w"));
                e.conv_b.push_back(lookup(stage + ".b"));
            }
            e.lin_w = lookup(base + "lin.w");
            e.lin_b = lookup(base + "lin.b");
        } else {
            e.fc1_w = lookup(base + "fc1.w");
            e.fc1_b = lookup(base + "fc1.b");
            e.fc2_w = lookup(base + "fc2.w");
            e.fc2_b = lookup(base + "fc2.b");
        }
        vars.enc.push_back(std::move(e));
        vars.wq.push_back(lookup("align." + cfg.groups[g] + ".wq"));
        vars.wk.push_back(lookup("align." + cfg.groups[g] + ".wk"));
    }
    vars.lstm.resize(params.lstm.size());
    for (std::size_t l = 0; l < params.lstm.size(); ++l) {
        for (std::size_t d = 0; d < 2; ++d) {
            const std::string base =
                "lstm.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
            vars.lstm[l][d].w_ih = lookup(base + "w_ih");
            vars.lstm[l][d].w_hh = lookup(base + "w_hh");
            vars.lstm[l][d].b = lookup(base + "b");
        }
    }
    vars.em_w = lookup("em.w");
    vars.em_b = lookup("em.b");
    vars.crf.trans = lookup("crf.trans");
    vars.crf.start = lookup("crf.start");
    vars.crf.end = lookup("crf.end");
    return vars;
}

// Checks one raw input against the geometry the configuration implies.
template <typename T>
void check_group_input(const TrainConfig& cfg, GroupId id, const Tensor<T>& raw) {
    if (raw.rank() != 2 || raw.dim(0) != cfg.t) {
        throw contract_error(std::string("group input ") + group_name(id) +
                             ": expected (" + std::to_string(cfg.t) + ", d), got " +
                             raw.shape_string());
    }
    const std::size_t channels = group_channels(id);
    std::size_t want = 0;
    if (channels > 0) {
        want = channels * cfg.height * cfg.width;
    } else {
        want = id == GroupId::scene_change ? 3 : 3 * cfg.pose_keypoints;
    }
    if (raw.dim(1) != want) {
        throw contract_error(std::string("group input ") + group_name(id) + ": expected d=" +
                             std::to_string(want) + ", got " + std::to_string(raw.dim(1)));
    }
}

// Per-group encoders onto (T, D) in cfg.groups column order. Inputs enter the
// tape as constants: gradients stop at the parameters.
template <typename T>
Var transform_features(Tape<T>& tape, const ModelVars<T>& vars, const TrainConfig& cfg,
                       const std::vector<Tensor<T>>& inputs) {
    if (inputs.size() != cfg.groups.size()) {
        throw contract_error("transform_features: expected " +
                             std::to_string(cfg.groups.size()) + " group inputs, got " +
                             std::to_string(inputs.size()));
    }
    const auto ids = cfg.group_ids();
    std::vector<Var> cols;
    for (std::size_t g = 0; g < ids.size(); ++g) {
        check_group_input(cfg, ids[g], inputs[g]);
        require_finite(inputs[g], std::string("group input ") + group_name(ids[g]));
        const EncoderVars& e = vars.enc[g];
        const std::size_t channels = group_channels(ids[g]);
        if (channels > 0) {
            Var x = tape.constant(Tensor<T>({cfg.t, channels, cfg.height, cfg.width},
                                            inputs[g].vec()));
            for (std::size_t s = 0; s < e.conv_w.size(); ++s) {
                x = tape.relu(tape.conv2d(x, e.conv_w[s], e.conv_b[s], cfg.encoder.stride,
                                          cfg.encoder.pad));
            }
            const Var pooled = tape.global_avg_pool(x);
            cols.push_back(
                tape.add_row_broadcast(tape.matmul_nt(pooled, e.lin_w), e.lin_b));
        } else {
            const Var x = tape.constant(inputs[g]);
            const Var h1 = tape.tanh(
                tape.add_row_broadcast(tape.matmul_nt(x, e.fc1_w), e.fc1_b));
            cols.push_back(tape.tanh(
                tape.add_row_broadcast(tape.matmul_nt(h1, e.fc2_w), e.fc2_b)));
        }
    }
    return tape.concat_cols(cols);
}

// Band attention weights over the clipped window [max(0,t-p), min(T-1,t+p)]
// for every group, kept alongside the raw scores for inspection.
template <typename T>
struct AttentionRecord {
    std::size_t p = 0;
    std::vector<std::string> group_names;
    std::vector<std::vector<std::vector<T>>> scores;   // [group][t][window]
    std::vector<std::vector<std::vector<T>>> weights;  // [group][t][window]
};

// Grouped aligning attention. Queries and keys are projections of the full
// rows of X; only the group's own columns are re-mixed:
//   s_i = (Wq x_t) . (Wk x_i) / sqrt(D), alpha = softmax over the band,
//   x'_t[group cols] = sum_i alpha_i x_i[group cols].
template <typename T>
Var align_features(Tape<T>& tape, const ModelVars<T>& vars, const TrainConfig& cfg, Var x,
                   AttentionRecord<T>* record = nullptr) {
    const std::size_t d = cfg.d();
    if (tape.value(x).rank() != 2 || tape.value(x).dim(1) != d) {
        throw contract_error("align_features: expected (T, " + std::to_string(d) + "), got " +
                             tape.value(x).shape_string());
    }
    if (record) {
        record->p = cfg.p;
        record->group_names = cfg.groups;
        record->scores.assign(cfg.groups.size(), {});
        record->weights.assign(cfg.groups.size(), {});
    }
    const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
    std::vector<Var> aligned;
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        const Var q = tape.matmul_nt(x, vars.wq[g]);
        const Var k = tape.matmul_nt(x, vars.wk[g]);
        const Var scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_d);
        const Var values = tape.slice_cols(x, g * cfg.group_width, cfg.group_width);
        aligned.push_back(tape.band_softmax_weighted_sum(
            scores, values, cfg.p, record ? &record->scores[g] : nullptr,
            record ? &record->weights[g] : nullptr));
    }
    return tape.concat_cols(aligned);
}

namespace detail {

template <typename T>
Var lstm_direction(Tape<T>& tape, const LstmDirVars& dir, Var x_seq, std::size_t hidden,
                   bool reverse) {
    const std::size_t steps = tape.value(x_seq).dim(0);
    Var h = tape.constant(Tensor<T>({1, hidden}));
    Var c = tape.constant(Tensor<T>({1, hidden}));
    std::vector<Var> outs(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t t = reverse ? steps - 1 - k : k;
        const Var xt = tape.row(x_seq, t);
        const Var gates = tape.add(
            tape.add(tape.matmul_nt(xt, dir.w_ih), tape.matmul_nt(h, dir.w_hh)), dir.b);
        const Var i = tape.sigmoid(tape.slice_cols(gates, 0, hidden));
        const Var f = tape.sigmoid(tape.slice_cols(gates, hidden, hidden));
        const Var g = tape.tanh(tape.slice_cols(gates, 2 * hidden, hidden));
        const Var o = tape.sigmoid(tape.slice_cols(gates, 3 * hidden, hidden));
        c = tape.add(tape.mul(f, c), tape.mul(i, g));
        h = tape.mul(o, tape.tanh(c));
        outs[t] = h;
    }
    return tape.concat_rows(outs);
}

}  // namespace detail

// Stacked BiLSTM, (T, in) -> (T, 2*hidden); the two directions run the same
// layer input and concatenate per step.
template <typename T>
Var bilstm_forward(Tape<T>& tape, const ModelVars<T>& vars, const TrainConfig& cfg, Var x) {
    Var seq = x;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const Var fwd = detail::lstm_direction(tape, vars.lstm[l][0], seq, cfg.hidden, false);
        const Var bwd = detail::lstm_direction(tape, vars.lstm[l][1], seq, cfg.hidden, true);
        seq = tape.concat_cols({fwd, bwd});
    }
    return seq;
}

// Full network up to the per-step label scores, (T, 2).
template <typename T>
Var fan_emissions(Tape<T>& tape, const ModelVars<T>& vars, const TrainConfig& cfg,
                  const std::vector<Tensor<T>>& inputs,
                  AttentionRecord<T>* record = nullptr) {
    const Var x = transform_features(tape, vars, cfg, inputs);
    const Var aligned = align_features(tape, vars, cfg, x, record);
    const Var hidden = bilstm_forward(tape, vars, cfg, aligned);
    return tape.add_row_broadcast(tape.matmul_nt(hidden, vars.em_w), vars.em_b);
}

// Per-segment training objective: negative CRF log-likelihood over T.
template <typename T>
Var fan_segment_loss(Tape<T>& tape, const ModelVars<T>& vars, const TrainConfig& cfg,
                     const std::vector<Tensor<T>>& inputs,
                     const std::vector<std::uint8_t>& labels) {
    const Var em = fan_emissions(tape, vars, cfg, inputs);
    const Var ll = crf_log_likelihood(tape, em, vars.crf, labels);
    return tape.scale(ll, -T(1) / static_cast<T>(cfg.t));
}

template <typename T>
struct Prediction {
    std::vector<std::uint8_t> labels;
    Tensor<T> emissions{std::vector<std::size_t>{1, 2}};
    T path_score = T(0);
};

// Inference pass: emissions with parameters as constants, then Viterbi.
template <typename T>
Prediction<T> fan_predict(const FanParams<T>& params, const std::vector<Tensor<T>>& inputs,
                          AttentionRecord<T>* record = nullptr) {
    Tape<T> tape;
    const ModelVars<T> vars = register_params(tape, params, false);
    const Var em = fan_emissions(tape, vars, params.cfg, inputs, record);
    Prediction<T> out;
    out.emissions = tape.value(em);
    auto [labels, score] = crf_viterbi_decode(out.emissions, params.crf_trans,
                                              params.crf_start, params.crf_end);
    out.labels = std::move(labels);
    out.path_score = score;
    return out;
}

// Model-side view of extracted streams: checked against the configuration and
// widened to the tape's scalar type.
template <typename T>
std::vector<Tensor<T>> model_inputs(const TrainConfig& cfg,
                                    const std::vector<FeatureStream>& streams) {
    if (streams.size() != cfg.groups.size()) {
        throw contract_error("model_inputs: expected " + std::to_string(cfg.groups.size()) +
                             " streams, got " + std::to_string(streams.size()));
    }
    const auto ids = cfg.group_ids();
    std::vector<Tensor<T>> out;
    out.reserve(streams.size());
    for (std::size_t g = 0; g < streams.size(); ++g) {
        if (streams[g].group != ids[g]) {
            throw contract_error(std::string("model_inputs: stream ") + std::to_string(g) +
                                 " is " + group_name(streams[g].group) + ", expected " +
                                 group_name(ids[g]));
        }
        out.push_back(streams[g].values.cast<T>());
        check_group_input(cfg, ids[g], out.back());
    }
    return out;
}

// FANC checkpoint: "FANC" magic, format version, the config digest, then the
// named parameter tensors as FANT blobs.
void save_checkpoint(const std::string& path, const FanParams<float>& params);
FanParams<float> load_checkpoint(const std::string& path, const TrainConfig& cfg);
std::uint64_t checkpoint_digest(const std::string& path);

std::string attention_record_to_json(const AttentionRecord<float>& record);

}  // namespace fan
