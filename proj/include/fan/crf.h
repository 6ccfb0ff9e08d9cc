#pragma once

// Linear-chain CRF over the two labels {0: no onset, 1: onset}.
// score(y) = start[y_1] + sum_t em[t, y_t] + sum_{t>=2} trans[y_{t-1}, y_t]
//          + end[y_T];  trans rows index the previous label.

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fan/autodiff.h"
#include "fan/error.h"
#include "fan/tensor.h"

namespace fan {

template <typename T>
struct CrfVars {
    Var trans;  // (2,2)
    Var start;  // (1,2)
    Var end;    // (1,2)
};

// Log-likelihood of the label sequence on the tape: score(y) - logZ with the
// forward algorithm run in log space.
template <typename T>
Var crf_log_likelihood(Tape<T>& tape, Var emissions, const CrfVars<T>& crf,
                       const std::vector<std::uint8_t>& y) {
    const Tensor<T>& em = tape.value(emissions);
    if (em.rank() != 2 || em.dim(1) != 2) {
        throw contract_error("crf_log_likelihood: emissions must be (T,2), got " +
                             em.shape_string());
    }
    const std::size_t steps = em.dim(0);
    if (y.size() != steps) {
        throw contract_error("crf_log_likelihood: label length " + std::to_string(y.size()) +
                             " vs T " + std::to_string(steps));
    }
    for (const auto label : y) {
        if (label > 1) {
            throw contract_error("crf_log_likelihood: labels must be 0/1");
        }
    }

    Var score = tape.gather(crf.start, y[0]);
    score = tape.add(score, tape.gather(emissions, 0 * 2 + y[0]));
    for (std::size_t t = 1; t < steps; ++t) {
        score = tape.add(score, tape.gather(crf.trans, y[t - 1] * 2 + y[t]));
        score = tape.add(score, tape.gather(emissions, t * 2 + y[t]));
    }
    score = tape.add(score, tape.gather(crf.end, y[steps - 1]));

    // forward recursion: alpha is (1,2) in log space
    Var alpha = tape.add(tape.row(emissions, 0), crf.start);
    for (std::size_t t = 1; t < steps; ++t) {
        const Var m = tape.add_col_broadcast(crf.trans, alpha);
        alpha = tape.add(tape.logsumexp_cols(m), tape.row(emissions, t));
    }
    const Var terminal = tape.add(alpha, crf.end);
    const Var log_z = tape.reshape(
        tape.logsumexp_cols(tape.reshape(terminal, {2, 1})), {1});
    return tape.sub(tape.reshape(score, {1}), log_z);
}

// Max-sum decode with backpointers; every tie breaks toward label 0.
template <typename T>
std::pair<std::vector<std::uint8_t>, T> crf_viterbi_decode(const Tensor<T>& emissions,
                                                           const Tensor<T>& trans,
                                                           const Tensor<T>& start,
                                                           const Tensor<T>& end) {
    if (emissions.rank() != 2 || emissions.dim(1) != 2) {
        throw contract_error("crf_viterbi_decode: emissions must be (T,2)");
    }
    if (trans.numel() != 4 || start.numel() != 2 || end.numel() != 2) {
        throw contract_error("crf_viterbi_decode: CRF parameter shapes");
    }
    require_finite(emissions, "crf_viterbi_decode emissions");
    const std::size_t steps = emissions.dim(0);
    std::vector<std::array<T, 2>> delta(steps);
    std::vector<std::array<std::uint8_t, 2>> back(steps);
    delta[0] = {start[0] + emissions.at2(0, 0), start[1] + emissions.at2(0, 1)};
    for (std::size_t t = 1; t < steps; ++t) {
        for (std::size_t j = 0; j < 2; ++j) {
            const T from0 = delta[t - 1][0] + trans[0 * 2 + j];
            const T from1 = delta[t - 1][1] + trans[1 * 2 + j];
            // label 0 wins ties
            if (from1 > from0) {
                back[t][j] = 1;
                delta[t][j] = from1 + emissions.at2(t, j);
            } else {
                back[t][j] = 0;
                delta[t][j] = from0 + emissions.at2(t, j);
            }
        }
    }
    const T final0 = delta[steps - 1][0] + end[0];
    const T final1 = delta[steps - 1][1] + end[1];
    std::vector<std::uint8_t> path(steps);
    path[steps - 1] = final1 > final0 ? 1 : 0;
    const T best = final1 > final0 ? final1 : final0;
    for (std::size_t t = steps - 1; t > 0; --t) {
        path[t - 1] = back[t][path[t]];
    }
    return {path, best};
}

}  // namespace fan
