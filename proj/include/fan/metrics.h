#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fan {

// Per-frame confusion counts for the onset class. Micro-averaging over a
// corpus is plain accumulation of these before any ratio is taken.
struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    Counts& operator+=(const Counts& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        return *this;
    }
};

// Exact per-frame comparison of two binary sequences of equal length.
Counts count_onsets(const std::vector<std::uint8_t>& predicted,
                    const std::vector<std::uint8_t>& truth);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Degenerate denominators resolve to zero: precision is 0 when nothing was
// predicted, recall is 0 when nothing was there to find, and F1 is 0 when
// precision + recall is 0.
Metrics metrics_from_counts(const Counts& counts);

double f1_score(double precision, double recall);

}  // namespace fan
