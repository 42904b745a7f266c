#include "ecgbench/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgbench/error.hpp"
#include "ecgbench/metrics.hpp"
#include "ecgbench/parallel.hpp"
#include "ecgbench/random.hpp"
#include "ecgbench/text_io.hpp"
#include "ecgbench/windows.hpp"

namespace ecgbench {

std::vector<double> naive_fit(const LabelMatrix& train) {
    if (train.num_records() == 0) throw DataError("naive predictor needs training rows");
    std::vector<double> freq(train.num_classes(), 0.0);
    for (std::size_t r = 0; r < train.num_records(); ++r) {
        for (std::size_t c = 0; c < freq.size(); ++c) freq[c] += train.values(r, c);
    }
    for (auto& f : freq) f /= static_cast<double>(train.num_records());
    return freq;
}

PredictionMatrix naive_predict(std::span<const double> frequencies, const std::vector<std::string>& class_codes,
                               const std::vector<std::string>& record_ids) {
    if (frequencies.size() != class_codes.size()) throw ArgumentError("one frequency per class expected");
    PredictionMatrix out{record_ids, class_codes, Matrix(record_ids.size(), class_codes.size())};
    for (std::size_t r = 0; r < record_ids.size(); ++r) {
        std::copy(frequencies.begin(), frequencies.end(), out.scores.row(r).begin());
    }
    return out;
}

const std::array<double, 8>& db4_lowpass() {
    static const std::array<double, 8> h{-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
                                         -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
                                         0.7148465705525415,    0.23037781330885523};
    return h;
}

const std::array<double, 8>& db4_highpass() {
    // quadrature mirror: g[n] = (-1)^(n+1) h[7-n]
    static const std::array<double, 8> g = [] {
        std::array<double, 8> out{};
        const auto& h = db4_lowpass();
        for (std::size_t n = 0; n < 8; ++n) out[n] = (n % 2 ? 1.0 : -1.0) * h[7 - n];
        return out;
    }();
    return g;
}

std::vector<std::vector<double>> dwt_db4(std::span<const double> signal, std::size_t levels) {
    if (levels == 0) throw ArgumentError("wavelet levels must be at least 1");
    const auto& lo = db4_lowpass();
    const auto& hi = db4_highpass();
    std::vector<std::vector<double>> bands;
    std::vector<double> x(signal.begin(), signal.end());
    for (std::size_t level = 1; level <= levels; ++level) {
        if (x.size() < 8) {
            throw DataError("signal of " + std::to_string(signal.size()) + " samples is too short for " +
                            std::to_string(levels) + " wavelet levels");
        }
        if (x.size() % 2) x.push_back(x.back());
        const std::size_t n = x.size(), m = n / 2;
        std::vector<double> a(m), d(m);
        for (std::size_t k = 0; k < m; ++k) {
            // the high-pass taps sum to zero, so filtering differences from a
            // reference sample makes constant stretches give exact zeros
            const double ref = x[(2 * k + 1) % n];
            double sa = 0.0, sd = 0.0;
            for (std::size_t j = 0; j < 8; ++j) {
                const double v = x[(2 * k + 1 + n * 8 - j) % n];
                sa += lo[j] * v;
                sd += hi[j] * (v - ref);
            }
            a[k] = sa;
            d[k] = sd;
        }
        bands.push_back(std::move(d));
        x = std::move(a);
    }
    bands.push_back(std::move(x));
    return bands;
}

const std::array<const char*, kBandFeatures>& band_feature_names() {
    static const std::array<const char*, kBandFeatures> names{
        "entropy", "p5", "p25", "p75", "p95", "median", "mean", "std", "var", "rms", "zero_crossings", "mean_crossings"};
    return names;
}

namespace {

double sorted_percentile(const std::vector<double>& s, double q) {
    const double pos = q / 100.0 * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

// Strict sign changes between neighbours; a zero sample breaks the run.
double crossings(std::span<const double> v, double offset) {
    double n = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if ((v[i - 1] - offset) * (v[i] - offset) < 0.0) ++n;
    }
    return n;
}

}  // namespace

std::array<double, kBandFeatures> band_features(std::span<const double> band) {
    if (band.empty()) throw DataError("empty wavelet band");
    const double n = static_cast<double>(band.size());
    double energy = 0.0, sum = 0.0;
    for (double v : band) {
        energy += v * v;
        sum += v;
    }
    double entropy = 0.0;
    if (energy > 0.0) {
        for (double v : band) {
            const double p = v * v / energy;
            if (p > 0.0) entropy -= p * std::log(p);
        }
    }
    std::vector<double> s(band.begin(), band.end());
    std::sort(s.begin(), s.end());
    // clamp keeps a constant band's mean exactly on its value
    const double mean = std::clamp(sum / n, s.front(), s.back());
    double var = 0.0;
    for (double v : band) var += (v - mean) * (v - mean);
    var /= n;
    return {entropy,
            sorted_percentile(s, 5),
            sorted_percentile(s, 25),
            sorted_percentile(s, 75),
            sorted_percentile(s, 95),
            sorted_percentile(s, 50),
            mean,
            std::sqrt(var),
            var,
            std::sqrt(energy / n),
            crossings(band, 0.0),
            crossings(band, mean)};
}

std::size_t feature_dim(std::size_t leads, const FeatureConfig& config) {
    return leads * (config.levels + 1) * kBandFeatures;
}

std::vector<std::string> feature_names(const std::vector<std::string>& lead_names, const FeatureConfig& config) {
    std::vector<std::string> out;
    for (const auto& lead : lead_names) {
        for (std::size_t b = 0; b <= config.levels; ++b) {
            const std::string band = b < config.levels ? "d" + std::to_string(b + 1) : "a" + std::to_string(config.levels);
            for (const char* f : band_feature_names()) out.push_back(lead + "/" + band + "/" + f);
        }
    }
    return out;
}

namespace {

void features_into(const Matrix& signal, const FeatureConfig& config, std::span<double> out) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < signal.rows(); ++l) {
        for (const auto& band : dwt_db4(signal.row(l), config.levels)) {
            for (double f : band_features(band)) out[pos++] += f;
        }
    }
}

}  // namespace

std::vector<double> wavelet_features(const Matrix& signal, const FeatureConfig& config) {
    if (signal.rows() == 0 || signal.cols() == 0) throw DataError("empty signal");
    std::vector<double> out(feature_dim(signal.rows(), config), 0.0);
    if (config.window_len == 0) {
        features_into(signal, config, out);
        return out;
    }
    const auto windows = tile_windows(signal, config.window_len);
    for (const auto& w : windows) features_into(w, config, out);
    for (auto& v : out) v /= static_cast<double>(windows.size());
    return out;
}

Matrix extract_features(std::span<const Matrix> signals, const FeatureConfig& config, unsigned threads) {
    if (signals.empty()) return Matrix(0, 0);
    const std::size_t leads = signals[0].rows();
    for (const auto& s : signals) {
        if (s.rows() != leads) throw DataError("signals have different lead counts");
    }
    Matrix out(signals.size(), feature_dim(leads, config));
    parallel_for(signals.size(), threads, [&](std::size_t i) {
        const auto f = wavelet_features(signals[i], config);
        std::copy(f.begin(), f.end(), out.row(i).begin());
    });
    return out;
}

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows() == 0) throw DataError("cannot standardize without rows");
    Standardizer s;
    s.input_dim = x.cols();
    const double n = static_cast<double>(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) sum += x(r, c);
        const double mean = sum / n;
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
        const double sd = std::sqrt(var / n);
        if (!std::isfinite(sd)) throw DataError("non-finite feature in column " + std::to_string(c));
        if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) continue;
        s.kept.push_back(c);
        s.mean.push_back(mean);
        s.scale.push_back(sd);
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (x.cols() != input_dim) {
        throw DataError("expected " + std::to_string(input_dim) + " features, got " + std::to_string(x.cols()));
    }
    Matrix out(x.rows(), kept.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < kept.size(); ++j) out(r, j) = (x(r, kept[j]) - mean[j]) / scale[j];
    }
    return out;
}

void ShallowNet::check() const {
    if (w1.cols() != b1.size() || w2.rows() != w1.cols() || w2.cols() != b2.size()) {
        throw DataError("inconsistent network dimensions");
    }
    if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
        throw DataError("network has non-finite parameters");
    }
}

bool ShallowNet::operator==(const ShallowNet& o) const {
    const auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
    };
    return same(w1, o.w1) && same(b1, o.b1) && same(w2, o.w2) && same(b2, o.b2);
}

ShallowNet make_net(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) throw ArgumentError("network dimensions must be positive");
    SplitMix64 rng(seed);
    const auto fill = [&](Eigen::MatrixXd& m, double bound) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
        }
    };
    const auto in = static_cast<Eigen::Index>(input_dim), hid = static_cast<Eigen::Index>(hidden_dim),
               out = static_cast<Eigen::Index>(output_dim);
    ShallowNet net{Eigen::MatrixXd(in, hid), Eigen::VectorXd::Zero(hid), Eigen::MatrixXd(hid, out),
                   Eigen::VectorXd::Zero(out)};
    fill(net.w1, std::sqrt(6.0 / static_cast<double>(input_dim)));
    fill(net.w2, std::sqrt(6.0 / static_cast<double>(hidden_dim + output_dim)));
    return net;
}

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    }
    return out;
}

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
    }
    return out;
}

Eigen::MatrixXd hidden_pre(const ShallowNet& net, const Eigen::MatrixXd& x) {
    return (x * net.w1).rowwise() + net.b1.transpose();
}

Eigen::MatrixXd logits(const ShallowNet& net, const Eigen::MatrixXd& x) {
    return (hidden_pre(net, x).cwiseMax(0.0) * net.w2).rowwise() + net.b2.transpose();
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

std::optional<double> macro_auc_of(const Eigen::MatrixXd& scores, const Matrix& labels) {
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < labels.cols(); ++c) {
        std::vector<double> s(static_cast<std::size_t>(scores.rows()));
        for (std::size_t r = 0; r < s.size(); ++r) s[r] = scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        const auto y = labels.column(c);
        try {
            sum += class_auc(s, y);
            ++defined;
        } catch (const UndefinedMetric&) {
        }
    }
    if (defined == 0) return std::nullopt;
    return sum / static_cast<double>(defined);
}

}  // namespace

double bce_loss(const ShallowNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, NetGradients* grads) {
    const Eigen::MatrixXd z1 = hidden_pre(net, x);
    const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    const Eigen::MatrixXd z2 = (a1 * net.w2).rowwise() + net.b2.transpose();
    const double count = static_cast<double>(y.rows() * y.cols());
    double loss = 0.0;
    Eigen::MatrixXd dz2(z2.rows(), z2.cols());
    for (Eigen::Index r = 0; r < z2.rows(); ++r) {
        for (Eigen::Index c = 0; c < z2.cols(); ++c) {
            const double z = z2(r, c), t = y(r, c);
            loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
            dz2(r, c) = (sigmoid(z) - t) / count;
        }
    }
    if (grads) {
        grads->w2 = a1.transpose() * dz2;
        grads->b2 = dz2.colwise().sum().transpose();
        const Eigen::MatrixXd dz1 = ((dz2 * net.w2.transpose()).array() * (z1.array() > 0.0).cast<double>()).matrix();
        grads->w1 = x.transpose() * dz1;
        grads->b1 = dz1.colwise().sum().transpose();
    }
    return loss / count;
}

TrainResult shallow_train(const Matrix& x_train, const Matrix& y_train, const Matrix& x_val, const Matrix& y_val,
                          const TrainConfig& config) {
    if (x_train.rows() == 0 || x_train.rows() != y_train.rows()) throw DataError("training features and labels disagree");
    if (x_val.rows() != y_val.rows() || (x_val.rows() && x_val.cols() != x_train.cols()) ||
        (y_val.rows() && y_val.cols() != y_train.cols())) {
        throw DataError("validation features and labels disagree");
    }
    if (config.batch == 0 || config.epochs == 0) throw ArgumentError("batch size and epochs must be positive");

    const Eigen::MatrixXd x = to_eigen(x_train), y = to_eigen(y_train), xv = to_eigen(x_val);
    TrainResult result;
    result.net = make_net(x_train.cols(), config.hidden, y_train.cols(), mix_seed(config.seed, 0x1417));
    ShallowNet net = result.net;

    struct Moments {
        Eigen::MatrixXd m, v;
    };
    const auto zeros = [](const auto& p) { return Moments{Eigen::MatrixXd::Zero(p.rows(), p.cols()), Eigen::MatrixXd::Zero(p.rows(), p.cols())}; };
    Moments mw1 = zeros(net.w1), mb1 = zeros(net.b1), mw2 = zeros(net.w2), mb2 = zeros(net.b2);

    std::vector<std::size_t> order(x_train.rows());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        SplitMix64 rng(mix_seed(config.seed, epoch));
        shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
            const std::size_t end = std::min(order.size(), begin + config.batch);
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(end - begin), x.cols());
            Eigen::MatrixXd yb(static_cast<Eigen::Index>(end - begin), y.cols());
            for (std::size_t i = begin; i < end; ++i) {
                xb.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(order[i]));
                yb.row(static_cast<Eigen::Index>(i - begin)) = y.row(static_cast<Eigen::Index>(order[i]));
            }
            NetGradients g;
            const double loss = bce_loss(net, xb, yb, &g);
            ++step;
            if (!std::isfinite(loss)) throw Error("non-finite training loss at step " + std::to_string(step));
            epoch_loss += loss;
            ++batches;

            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            const auto update = [&](auto& param, const auto& grad, Moments& mo) {
                param *= 1.0 - config.lr * config.weight_decay;
                mo.m = config.beta1 * mo.m + (1.0 - config.beta1) * grad;
                mo.v = config.beta2 * mo.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
                param -= (config.lr * (mo.m / c1).array() / ((mo.v / c2).array().sqrt() + config.adam_eps)).matrix();
            };
            update(net.w1, g.w1, mw1);
            update(net.b1, g.b1, mb1);
            update(net.w2, g.w2, mw2);
            update(net.b2, g.b2, mb2);
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        if (x_val.rows() == 0) {
            result.val_auc.push_back(std::nullopt);
            continue;
        }
        const auto auc = macro_auc_of(logits(net, xv), y_val);
        result.val_auc.push_back(auc);
        if (auc && (!result.best_val_auc || *auc > *result.best_val_auc)) {
            result.best_val_auc = auc;
            result.best_epoch = epoch;
            result.net = net;
        }
    }
    if (!result.best_val_auc) result.net = net;
    return result;
}

Matrix shallow_logits(const ShallowNet& net, const Matrix& x) {
    if (x.cols() != net.input_dim()) {
        throw DataError("network expects " + std::to_string(net.input_dim()) + " features, got " + std::to_string(x.cols()));
    }
    return from_eigen(logits(net, to_eigen(x)));
}

Matrix shallow_predict(const ShallowNet& net, const Matrix& x) {
    auto out = shallow_logits(net, x);
    for (auto& v : out.data()) v = sigmoid(v);
    return out;
}

std::vector<double> lrp_dense(std::span<const double> activations, const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                              std::span<const double> relevance_out, double epsilon) {
    const auto in = static_cast<Eigen::Index>(activations.size());
    if (w.rows() != in || w.cols() != b.size() || static_cast<std::size_t>(b.size()) != relevance_out.size()) {
        throw ArgumentError("layer dimensions do not match");
    }
    std::vector<double> r(activations.size(), 0.0);
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
        const double rk = relevance_out[static_cast<std::size_t>(k)];
        if (rk == 0.0) continue;
        double z = b(k);
        for (Eigen::Index j = 0; j < in; ++j) z += activations[static_cast<std::size_t>(j)] * w(j, k);
        const double denom = z + epsilon * (z >= 0.0 ? 1.0 : -1.0);
        if (denom == 0.0) continue;
        const double s = rk / denom;
        for (Eigen::Index j = 0; j < in; ++j) r[static_cast<std::size_t>(j)] += activations[static_cast<std::size_t>(j)] * w(j, k) * s;
    }
    return r;
}

std::vector<double> lrp_epsilon(const ShallowNet& net, std::span<const double> input, std::size_t target_class,
                                double epsilon) {
    if (input.size() != net.input_dim()) throw DataError("input does not match the network");
    if (target_class >= net.output_dim()) throw ArgumentError("target class out of range");
    const Eigen::Map<const Eigen::RowVectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
    const Eigen::RowVectorXd a1 = ((x * net.w1) + net.b1.transpose()).cwiseMax(0.0);
    const auto t = static_cast<Eigen::Index>(target_class);
    std::vector<double> r_out(net.output_dim(), 0.0);
    r_out[target_class] = a1.dot(net.w2.col(t)) + net.b2(t);
    const std::vector<double> hidden(a1.data(), a1.data() + a1.size());
    const auto r_hidden = lrp_dense(hidden, net.w2, net.b2, r_out, epsilon);
    return lrp_dense(input, net.w1, net.b1, r_hidden, epsilon);
}

namespace {

constexpr std::string_view kNetMagic = "ECGBNET1";
constexpr std::string_view kModelMagic = "ECGBWAV1";

void put_matrix(std::string& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("truncated model file");
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t u64() { return get_u64(reinterpret_cast<const std::uint8_t*>(take(8).data())); }
    double f64() { return get_f64(reinterpret_cast<const std::uint8_t*>(take(8).data())); }
    std::string str() {
        const auto n = u64();
        return std::string(take(n));
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

constexpr std::uint64_t kMaxDim = 1u << 24;

Eigen::MatrixXd read_matrix(Reader& in, std::uint64_t rows, std::uint64_t cols) {
    in.need(rows * cols * 8);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.f64();
    }
    return m;
}

void put_str(std::string& out, std::string_view s) {
    put_u64(out, s.size());
    out += s;
}

}  // namespace

std::string serialize_net(const ShallowNet& net) {
    net.check();
    std::string out(kNetMagic);
    put_u64(out, net.input_dim());
    put_u64(out, net.hidden_dim());
    put_u64(out, net.output_dim());
    put_matrix(out, net.w1);
    put_matrix(out, net.b1.transpose());
    put_matrix(out, net.w2);
    put_matrix(out, net.b2.transpose());
    return out;
}

ShallowNet deserialize_net(std::string_view bytes, std::size_t* consumed) {
    Reader in(bytes);
    if (in.take(std::min<std::size_t>(8, bytes.size())) != kNetMagic) throw DataError("not a network checkpoint");
    const auto i = in.u64(), h = in.u64(), o = in.u64();
    if (i == 0 || h == 0 || o == 0 || i > kMaxDim || h > kMaxDim || o > kMaxDim) {
        throw DataError("implausible network dimensions");
    }
    ShallowNet net;
    net.w1 = read_matrix(in, i, h);
    net.b1 = read_matrix(in, 1, h).transpose();
    net.w2 = read_matrix(in, h, o);
    net.b2 = read_matrix(in, 1, o).transpose();
    net.check();
    if (consumed) *consumed = in.pos();
    else if (!in.done()) throw DataError("trailing bytes after network checkpoint");
    return net;
}

void save_model(const std::filesystem::path& path, const WaveletModel& model) {
    const auto& s = model.standardizer;
    if (s.output_dim() != model.net.input_dim() || model.class_codes.size() != model.net.output_dim() ||
        model.feature_names.size() != s.input_dim) {
        throw ArgumentError("model parts have inconsistent dimensions");
    }
    std::string out = serialize_net(model.net);
    out += kModelMagic;
    put_u64(out, model.features.levels);
    put_u64(out, model.features.window_len);
    put_u64(out, model.class_codes.size());
    for (const auto& c : model.class_codes) put_str(out, c);
    put_u64(out, model.feature_names.size());
    for (const auto& f : model.feature_names) put_str(out, f);
    put_u64(out, s.kept.size());
    for (std::size_t j = 0; j < s.kept.size(); ++j) {
        put_u64(out, s.kept[j]);
        put_f64(out, s.mean[j]);
        put_f64(out, s.scale[j]);
    }
    write_file_atomic(path, out);
}

WaveletModel load_model(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    WaveletModel m;
    std::size_t used = 0;
    m.net = deserialize_net(bytes, &used);
    Reader in(std::string_view(bytes).substr(used));
    if (in.take(std::min<std::size_t>(8, bytes.size() - used)) != kModelMagic) {
        throw DataError(path.string() + ": checkpoint has no feature pipeline section");
    }
    m.features.levels = in.u64();
    m.features.window_len = in.u64();
    const auto nc = in.u64();
    if (nc != m.net.output_dim()) throw DataError("class list does not match the network");
    for (std::uint64_t c = 0; c < nc; ++c) m.class_codes.push_back(in.str());
    const auto nf = in.u64();
    if (nf > kMaxDim) throw DataError("implausible feature count");
    for (std::uint64_t f = 0; f < nf; ++f) m.feature_names.push_back(in.str());
    const auto nk = in.u64();
    if (nk != m.net.input_dim()) throw DataError("standardizer does not match the network");
    m.standardizer.input_dim = nf;
    for (std::uint64_t j = 0; j < nk; ++j) {
        const auto k = in.u64();
        if (k >= nf) throw DataError("standardizer column out of range");
        m.standardizer.kept.push_back(k);
        m.standardizer.mean.push_back(in.f64());
        m.standardizer.scale.push_back(in.f64());
    }
    if (!in.done()) throw DataError("trailing bytes in model file");
    return m;
}

std::vector<double> model_relevance(const WaveletModel& model, std::span<const double> raw_features,
                                    std::size_t target_class, double epsilon) {
    Matrix row(1, raw_features.size());
    std::copy(raw_features.begin(), raw_features.end(), row.row(0).begin());
    const auto x = model.standardizer.apply(row);
    const auto r = lrp_epsilon(model.net, x.row(0), target_class, epsilon);
    std::vector<double> out(model.standardizer.input_dim, 0.0);
    for (std::size_t j = 0; j < r.size(); ++j) out[model.standardizer.kept[j]] = r[j];
    return out;
}

}  // namespace ecgbench
