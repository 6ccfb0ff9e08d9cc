#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fan/error.h"
#include "fan/tensor.h"

namespace fan {

template <typename T>
struct GradCheckEntry {
    std::string name;
    T max_rel_error = T(0);
    std::size_t worst_index = 0;
    T analytic_at_worst = T(0);
    T numeric_at_worst = T(0);
};

template <typename T>
struct GradCheckReport {
    std::vector<GradCheckEntry<T>> entries;
    T max_rel_error = T(0);

    bool pass(T tolerance) const { return max_rel_error <= tolerance; }
};

// Central-difference verification of analytic gradients. `loss` must be a
// pure function of the parameter vector; two evaluations at the unperturbed
// point are compared first and any discrepancy aborts the check, since
// finite differences are meaningless for a nondeterministic function.
template <typename T>
GradCheckReport<T> finite_diff_check(
    const std::function<T(const std::vector<Tensor<T>>&)>& loss,
    std::vector<Tensor<T>> params, const std::vector<Tensor<T>>& analytic,
    const std::vector<std::string>& names, T epsilon = T(1e-5)) {
    if (params.size() != analytic.size() || params.size() != names.size()) {
        throw contract_error("finite_diff_check: params/analytic/names size mismatch");
    }
    const T base1 = loss(params);
    const T base2 = loss(params);
    if (base1 != base2) {
        throw numeric_error("finite_diff_check: loss function is nondeterministic");
    }
    const T floor = T(1e-6);
    GradCheckReport<T> report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        require_same_dims(params[pi], analytic[pi], "finite_diff_check");
        GradCheckEntry<T> entry;
        entry.name = names[pi];
        for (std::size_t i = 0; i < params[pi].numel(); ++i) {
            const T saved = params[pi][i];
            params[pi][i] = saved + epsilon;
            const T up = loss(params);
            params[pi][i] = saved - epsilon;
            const T down = loss(params);
            params[pi][i] = saved;
            const T numeric = (up - down) / (T(2) * epsilon);
            const T a = analytic[pi][i];
            const T rel = std::abs(a - numeric) /
                          std::max({std::abs(a), std::abs(numeric), floor});
            if (rel >= entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.worst_index = i;
                entry.analytic_at_worst = a;
                entry.numeric_at_worst = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace fan
