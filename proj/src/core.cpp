#include "omnical/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace omnical {

double compensated_sum(std::span<const double> values) {
    CompensatedSum s;
    for (double v : values) s.add(v);
    return s.value();
}

double compensated_dot(std::span<const double> a, std::span<const double> b) {
    CompensatedSum s;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t k = 0; k < n; ++k) s.add(a[k] * b[k]);
    return s.value();
}

ForecastGrid::ForecastGrid(int m) : m_(m) {
    if (m < 1) throw ConfigError("grid resolution m must be >= 1, got " + std::to_string(m));
}

std::vector<double> ForecastGrid::values() const {
    std::vector<double> v(size());
    for (int j = 0; j <= m_; ++j) v[j] = value(j);
    return v;
}

int ForecastGrid::round_index(double v) const {
    if (!(v > 0.0)) return 0;  // also catches NaN
    if (v >= 1.0) return m_;
    int lo = static_cast<int>(std::floor(v * m_));
    lo = std::clamp(lo, 0, m_);
    if (lo == m_) return m_;
    const double d_lo = v - value(lo);
    const double d_hi = value(lo + 1) - v;
    return d_hi < d_lo ? lo + 1 : lo;
}

int ForecastGrid::index_of(double p) const {
    const long j = std::lround(p * m_);
    if (j < 0 || j > m_ || value(static_cast<int>(j)) != p)
        throw Error("value " + format_double(p) + " is not on the grid with m=" + std::to_string(m_));
    return static_cast<int>(j);
}

double round_to_grid(double v, const ForecastGrid& grid) { return grid.round(v); }

std::vector<double> augment(std::span<const double> x) {
    std::vector<double> out(x.size() + 1);
    const double s = std::numbers::sqrt2 / 2.0;
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] * s;
    out[x.size()] = s;
    return out;
}

void Transcript::push(TranscriptEntry e) {
    if (!entries.empty() && e.x.x.size() != entries.front().x.x.size())
        throw Error("transcript feature dimension changed at round " + std::to_string(entries.size()));
    entries.push_back(std::move(e));
}

Transcript Transcript::prefix(std::size_t n) const {
    Transcript out{grid, track, {}};
    n = std::min(n, entries.size());
    out.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

Predictor constant_predictor(std::string name, double c) {
    return Predictor{std::move(name), [c](const Example&) { return c; }};
}

FiniteClass make_finite_class(std::vector<Predictor> predictors, double B) {
    if (B < 1.0) throw ConfigError("finite class bound B must be >= 1 to contain I");
    const bool has_one =
        std::any_of(predictors.begin(), predictors.end(), [](const Predictor& p) { return p.name == "I"; });
    if (!has_one) predictors.insert(predictors.begin(), constant_predictor("I", 1.0));
    return FiniteClass{std::move(predictors), B};
}

BucketStats::BucketStats(const ForecastGrid& grid, const FunctionClass& cls, ResidualRule rule)
    : grid_(grid), cls_(cls), rule_(rule), buckets_(grid.size()) {
    if (const auto* fc = std::get_if<FiniteClass>(&cls_)) {
        num_f_ = fc->predictors.size();
    } else {
        linear_ = true;
        vec_dim_ = std::get<LinearBall>(cls_).d + 1;
    }
    for (auto& b : buckets_) {
        b.residual.resize(num_f_);
        b.sum_f.resize(num_f_);
        b.sum_f_y[0].resize(num_f_);
        b.sum_f_y[1].resize(num_f_);
        b.vec.resize(vec_dim_);
    }
}

void BucketStats::add(const TranscriptEntry& e, std::size_t round) {
    const int p = grid_.index_of(e.forecast);
    Bucket& b = buckets_[p];
    const double r = rule_(e.outcome, e.forecast);
    const int y = rule_.track == Track::Mean ? (e.outcome >= 0.5 ? 1 : 0)
                                             : (e.outcome <= e.forecast ? 1 : 0);
    ++b.n;
    ++b.n_y[y];
    ++total_;
    b.sum_y.add(e.outcome);
    if (const auto* fc = std::get_if<FiniteClass>(&cls_)) {
        for (std::size_t f = 0; f < num_f_; ++f) {
            const double v = fc->predictors[f].fn(e.x);
            if (!std::isfinite(v) || v * v > fc->B * (1.0 + 1e-12))
                throw Error("predictor '" + fc->predictors[f].name + "' produced invalid value " +
                            format_double(v) + " at round " + std::to_string(round));
            b.residual[f].add(v * r);
            b.sum_f[f].add(v);
            b.sum_f_y[y][f].add(v);
        }
    } else {
        const auto& lb = std::get<LinearBall>(cls_);
        if (e.x.x.size() != lb.d)
            throw Error("feature dimension " + std::to_string(e.x.x.size()) + " does not match class d=" +
                        std::to_string(lb.d) + " at round " + std::to_string(round));
        const auto xa = augment(e.x.x);
        for (std::size_t k = 0; k < vec_dim_; ++k) b.vec[k].add(xa[k] * r);
    }
}

std::vector<double> BucketStats::residual_vector(int p) const {
    std::vector<double> v(vec_dim_);
    for (std::size_t k = 0; k < vec_dim_; ++k) v[k] = buckets_[p].vec[k].value();
    return v;
}

BucketStats bucket_stats(const Transcript& t, const FunctionClass& cls, ResidualRule rule) {
    BucketStats s(t.grid, cls, rule);
    for (std::size_t r = 0; r < t.entries.size(); ++r) s.add(t.entries[r], r);
    return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream ^ 0x5851F42D4C957F2DULL))) {}

double RandomSource::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RandomSource::normal() {
    const double u1 = 1.0 - uniform();  // (0,1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int RandomSource::categorical(std::span<const double> probs) {
    if (probs.empty()) throw Error("categorical draw from an empty distribution");
    const double u = uniform();
    double c = 0.0;
    int last_positive = 0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] > 0.0) last_positive = static_cast<int>(k);
        c += probs[k];
        if (u < c) return static_cast<int>(k);
    }
    return last_positive;  // u beyond the rounded total mass
}

RandomSource RandomSource::fork(std::uint64_t key) const {
    return RandomSource(seed_, splitmix64(stream_ * 0x100000001B3ULL + splitmix64(key)));
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_transcript_csv(std::ostream& os, const Transcript& t) {
    const std::size_t d = t.dim();
    os << "t,forecast,outcome,i,j";
    for (std::size_t k = 0; k < d; ++k) os << ",feature_" << k;
    os << '\n';
    for (std::size_t r = 0; r < t.entries.size(); ++r) {
        const auto& e = t.entries[r];
        os << r + 1 << ',' << format_double(e.forecast) << ',' << format_double(e.outcome) << ',' << e.i << ','
           << e.j;
        for (double v : e.x.x) os << ',' << format_double(v);
        os << '\n';
    }
}

Transcript read_transcript_csv(std::istream& is, int m, Track track) {
    Transcript t{ForecastGrid(m), track, {}};
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,forecast,outcome,i,j", 0) != 0)
        throw Error("transcript CSV is missing its header row");
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw Error("transcript CSV row " + std::to_string(row) + " has too few columns");
        auto num = [&](const std::string& c) {
            double v = 0.0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc{}) throw Error("bad number '" + c + "' on row " + std::to_string(row));
            return v;
        };
        TranscriptEntry e;
        e.forecast = num(cells[1]);
        e.outcome = num(cells[2]);
        e.i = static_cast<int>(num(cells[3]));
        e.j = static_cast<int>(num(cells[4]));
        for (std::size_t k = 5; k < cells.size(); ++k) e.x.x.push_back(num(cells[k]));
        t.grid.index_of(e.forecast);
        t.push(std::move(e));
    }
    return t;
}

}  // namespace omnical
