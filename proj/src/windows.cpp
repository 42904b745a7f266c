#include "ecgbench/windows.hpp"

#include <algorithm>
#include <string>

#include "ecgbench/error.hpp"
#include "ecgbench/random.hpp"

namespace ecgbench {

namespace {

void check(const Matrix& signal, std::size_t window_len) {
    if (signal.rows() == 0 || signal.cols() == 0) throw DataError("empty signal");
    if (window_len == 0) throw ArgumentError("window length must be at least 1");
}

Matrix slice(const Matrix& signal, std::size_t start, std::size_t window_len) {
    Matrix out(signal.rows(), window_len);
    for (std::size_t l = 0; l < signal.rows(); ++l) {
        auto src = signal.row(l).subspan(start, window_len);
        std::copy(src.begin(), src.end(), out.row(l).begin());
    }
    return out;
}

Matrix pad(const Matrix& signal, std::size_t window_len, std::size_t before) {
    Matrix out(signal.rows(), window_len);
    for (std::size_t l = 0; l < signal.rows(); ++l) {
        auto src = signal.row(l);
        std::copy(src.begin(), src.end(), out.row(l).begin() + static_cast<std::ptrdiff_t>(before));
    }
    return out;
}

}  // namespace

Crop random_crop(const Matrix& signal, std::size_t window_len, std::uint64_t seed) {
    check(signal, window_len);
    const std::size_t t = signal.cols();
    if (t < window_len) {
        const std::size_t before = (window_len - t) / 2;
        return {pad(signal, window_len, before), 0, before};
    }
    SplitMix64 rng(seed);
    const auto start = static_cast<std::size_t>(rng.below(t - window_len + 1));
    return {slice(signal, start, window_len), start, 0};
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len) {
    if (length == 0) throw DataError("empty signal");
    if (window_len == 0) throw ArgumentError("window length must be at least 1");
    if (length <= window_len) return {0};
    const std::size_t stride = std::max<std::size_t>(1, window_len / 2);
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + window_len <= length; s += stride) starts.push_back(s);
    if (starts.back() + window_len < length) starts.push_back(length - window_len);
    return starts;
}

std::vector<Matrix> tile_windows(const Matrix& signal, std::size_t window_len) {
    check(signal, window_len);
    if (signal.cols() < window_len) return {pad(signal, window_len, (window_len - signal.cols()) / 2)};
    std::vector<Matrix> out;
    for (auto s : window_starts(signal.cols(), window_len)) out.push_back(slice(signal, s, window_len));
    return out;
}

AggregateMode parse_aggregate_mode(std::string_view name) {
    if (name == "max") return AggregateMode::max;
    if (name == "mean") return AggregateMode::mean;
    throw ArgumentError("unknown aggregation: " + std::string(name));
}

std::vector<double> aggregate(const Matrix& window_scores, AggregateMode mode) {
    const std::size_t w = window_scores.rows();
    if (w == 0) throw ArgumentError("no windows to aggregate");
    auto first = window_scores.row(0);
    std::vector<double> out(first.begin(), first.end());
    for (std::size_t i = 1; i < w; ++i) {
        auto r = window_scores.row(i);
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] = mode == AggregateMode::max ? std::max(out[c], r[c]) : out[c] + r[c];
        }
    }
    if (mode == AggregateMode::mean) {
        for (auto& v : out) v /= static_cast<double>(w);
    }
    return out;
}

}  // namespace ecgbench
