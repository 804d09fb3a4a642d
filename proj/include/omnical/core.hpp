#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace omnical {

// Error taxonomy shared by every module.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class ProtocolError : public Error {
public:
    using Error::Error;
};
class NumericalError : public Error {
public:
    using Error::Error;
};
class UnsupportedError : public Error {
public:
    using Error::Error;
};
class ConfigError : public Error {
public:
    using Error::Error;
};

// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double compensated_sum(std::span<const double> values);
double compensated_dot(std::span<const double> a, std::span<const double> b);

// Forecast grid {j/m : j = 0..m}.
class ForecastGrid {
public:
    explicit ForecastGrid(int m);
    int m() const { return m_; }
    int size() const { return m_ + 1; }
    double value(int j) const { return static_cast<double>(j) / m_; }
    std::vector<double> values() const;
    // Nearest grid index after clamping to [0,1]; ties go to the smaller value.
    int round_index(double v) const;
    double round(double v) const { return value(round_index(v)); }
    // Index of a value that already lies on the grid.
    int index_of(double p) const;
    bool operator==(const ForecastGrid& o) const { return m_ == o.m_; }

private:
    int m_;
};

double round_to_grid(double v, const ForecastGrid& grid);

struct Example {
    std::vector<double> x;
    std::vector<std::uint8_t> groups;
};

// Intercept-augmented features (x, 1)/sqrt(2); norm stays <= 1 when ||x|| <= 1.
std::vector<double> augment(std::span<const double> x);

enum class Track { Mean, Quantile };

struct TranscriptEntry {
    Example x;
    double outcome = 0.0;  // label y in {0,1} or score s in [0,1]
    double forecast = 0.0;
    int i = -1;  // sampled oracle index, -1 when absent
    int j = -1;  // sampled grid index, -1 when absent
};

struct Transcript {
    ForecastGrid grid{1};
    Track track = Track::Mean;
    std::vector<TranscriptEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    std::size_t dim() const { return entries.empty() ? 0 : entries.front().x.x.size(); }
    void push(TranscriptEntry e);
    Transcript prefix(std::size_t n) const;
};

// Benchmark predictor families.
struct Predictor {
    std::string name;
    std::function<double(const Example&)> fn;
};

struct FiniteClass {
    std::vector<Predictor> predictors;
    double B = 1.0;
};

struct LinearBall {
    std::size_t d = 0;  // raw feature dimension; parameters live in d+1 dimensions
    double B = 1.0;
};

using FunctionClass = std::variant<FiniteClass, LinearBall>;

Predictor constant_predictor(std::string name, double c);
// Prepends the constant-1 predictor "I" when no predictor of that name exists.
FiniteClass make_finite_class(std::vector<Predictor> predictors, double B);

// Residual convention for bucket statistics.
struct ResidualRule {
    Track track = Track::Mean;
    double q = 0.5;  // target quantile on the quantile track
    double operator()(double outcome, double forecast) const {
        if (track == Track::Mean) return outcome - forecast;
        return q - (outcome <= forecast ? 1.0 : 0.0);
    }
};

// Per-bucket accumulators; incremental add() and a full rescan run the same code.
class BucketStats {
public:
    BucketStats(const ForecastGrid& grid, const FunctionClass& cls, ResidualRule rule = {});

    void add(const TranscriptEntry& e, std::size_t round);

    const ForecastGrid& grid() const { return grid_; }
    std::size_t total() const { return total_; }
    std::size_t n(int p) const { return buckets_[p].n; }
    std::size_t n(int p, int y) const { return buckets_[p].n_y[y]; }
    double sum_y(int p) const { return buckets_[p].sum_y.value(); }
    double residual_sum(int p, std::size_t f) const { return buckets_[p].residual[f].value(); }
    double sum_f(int p, std::size_t f) const { return buckets_[p].sum_f[f].value(); }
    double sum_f(int p, int y, std::size_t f) const { return buckets_[p].sum_f_y[y][f].value(); }
    std::vector<double> residual_vector(int p) const;
    std::size_t num_predictors() const { return num_f_; }
    std::size_t vector_dim() const { return vec_dim_; }
    bool linear() const { return linear_; }

private:
    struct Bucket {
        std::size_t n = 0;
        std::size_t n_y[2] = {0, 0};
        CompensatedSum sum_y;
        std::vector<CompensatedSum> residual;
        std::vector<CompensatedSum> sum_f;
        std::vector<CompensatedSum> sum_f_y[2];
        std::vector<CompensatedSum> vec;
    };
    ForecastGrid grid_;
    FunctionClass cls_;
    ResidualRule rule_;
    bool linear_ = false;
    std::size_t num_f_ = 0;
    std::size_t vec_dim_ = 0;
    std::size_t total_ = 0;
    std::vector<Bucket> buckets_;
};

BucketStats bucket_stats(const Transcript& t, const FunctionClass& cls, ResidualRule rule = {});

// Deterministic randomness keyed by (seed, stream). The engine is std::mt19937_64,
// whose output sequence is fixed by the standard; all conversions are local.
class RandomSource {
public:
    RandomSource(std::uint64_t seed, std::uint64_t stream);
    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();  // [0,1), 53 random bits
    double normal();   // Box-Muller, no cached second value
    bool bernoulli(double p) { return uniform() < p; }
    // Inverse-CDF draw; boundaries tie to the lower index.
    int categorical(std::span<const double> probs);
    // Independent child source, a pure function of (seed, stream, key).
    RandomSource fork(std::uint64_t key) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Transcript CSV: t,forecast,outcome,i,j,feature_0..feature_{d-1}.
void write_transcript_csv(std::ostream& os, const Transcript& t);
Transcript read_transcript_csv(std::istream& is, int m, Track track);
std::string format_double(double v);  // 17 significant digits

}  // namespace omnical
