#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "ecgbench/matrix.hpp"

namespace ecgbench {

// Signals here are leads x samples.

struct Crop {
    Matrix window;
    std::size_t start = 0;   // offset into the source; 0 when padded
    std::size_t padding = 0; // zeros before the source when T < L
};

// Uniform random start in [0, T-L]. Shorter signals are zero-padded to L with
// the source centred (the odd extra zero goes after it).
Crop random_crop(const Matrix& signal, std::size_t window_len, std::uint64_t seed);

// Starts 0, L/2, 2(L/2), ... while start + L <= T, plus a final window ending
// at T when the tail is not covered. A signal shorter than L yields a single
// padded window at start 0.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len);
std::vector<Matrix> tile_windows(const Matrix& signal, std::size_t window_len);

enum class AggregateMode { max, mean };
AggregateMode parse_aggregate_mode(std::string_view name);

// W x C window scores -> C record scores.
std::vector<double> aggregate(const Matrix& window_scores, AggregateMode mode);

}  // namespace ecgbench
