#include "fan/metrics.h"

#include <string>

#include "fan/error.h"

namespace fan {

Counts count_onsets(const std::vector<std::uint8_t>& predicted,
                    const std::vector<std::uint8_t>& truth) {
    if (predicted.size() != truth.size()) {
        throw contract_error("count_onsets: " + std::to_string(predicted.size()) +
                             " predictions vs " + std::to_string(truth.size()) + " labels");
    }
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] != 0;
        const bool t = truth[i] != 0;
        if (p && t) ++c.tp;
        if (p && !t) ++c.fp;
        if (!p && t) ++c.fn;
    }
    return c;
}

Metrics metrics_from_counts(const Counts& counts) {
    Metrics m;
    const std::size_t predicted = counts.tp + counts.fp;
    const std::size_t actual = counts.tp + counts.fn;
    if (predicted > 0) m.precision = static_cast<double>(counts.tp) / predicted;
    if (actual > 0) m.recall = static_cast<double>(counts.tp) / actual;
    m.f1 = f1_score(m.precision, m.recall);
    return m;
}

double f1_score(double precision, double recall) {
    if (precision < 0.0 || precision > 1.0 || recall < 0.0 || recall > 1.0) {
        throw contract_error("f1_score: arguments must lie in [0,1]");
    }
    const double denom = precision + recall;
    if (denom == 0.0) return 0.0;
    return 2.0 * precision * recall / denom;
}

}  // namespace fan
