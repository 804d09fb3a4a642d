#include "cli_common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace omnical::cli {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

int ExperimentConfig::grid_m() const {
    if (m > 0) return m;
    const double t = static_cast<double>(T);
    if (command == "run-amf" || command == "run-vcal") return std::max(1, static_cast<int>(std::ceil(std::sqrt(t))));
    return std::max(1, static_cast<int>(std::ceil(std::pow(t, 0.25))));
}

std::string ExperimentConfig::adversary_spec() const {
    if (command == "run-conformal") {
        if (stream.find(':') != std::string::npos) return stream;
        return stream + ":" + fmt(score_rho) + ":" + std::to_string(groups);
    }
    return adversary.empty() ? "linear:4" : adversary;
}

std::string ExperimentConfig::class_spec() const {
    if (!cls.empty()) return cls;
    if (command == "run-amf") return "bank:16";
    if (command == "run-vcal") return "boolbank:8";
    if (command == "run-omni") return "bank:8";
    return "linear:1";
}

std::string ExperimentConfig::oracle_spec() const {
    if (!oracle.empty()) return oracle;
    return "aw";
}

std::vector<std::string> config_keys() {
    return {"T",      "grid-m", "mprime",      "seed",  "reps",  "jobs",  "adversary", "oracle",
            "class",  "losses", "out",         "q",     "stream", "groups", "score-rho", "gamma",
            "eta",    "radius", "rho",         "trace-points", "svg"};
}

void set_config_key(ExperimentConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "T") c.T = to_uint(key, v);
    else if (key == "grid-m") c.m = static_cast<int>(to_uint(key, v));
    else if (key == "mprime") c.mprime = static_cast<int>(to_uint(key, v));
    else if (key == "seed") c.seed = to_uint(key, v);
    else if (key == "reps") c.reps = to_uint(key, v);
    else if (key == "jobs") c.jobs = to_uint(key, v);
    else if (key == "adversary") c.adversary = v;
    else if (key == "oracle") c.oracle = v;
    else if (key == "class") c.cls = v;
    else if (key == "losses") c.losses = v;
    else if (key == "out") c.out = v;
    else if (key == "q") c.q = to_double(key, v);
    else if (key == "stream") c.stream = v;
    else if (key == "groups") c.groups = to_uint(key, v);
    else if (key == "score-rho") c.score_rho = to_double(key, v);
    else if (key == "gamma") c.gamma = to_double(key, v);
    else if (key == "eta") c.eta = to_double(key, v);
    else if (key == "radius") c.radius = to_double(key, v);
    else if (key == "rho") c.rho = to_double(key, v);
    else if (key == "trace-points") c.trace_points = to_uint(key, v);
    else if (key == "svg") c.svg = to_bool(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

Json config_json(const ExperimentConfig& c) {
    Json j;
    j["command"] = c.command;
    j["T"] = c.T;
    j["grid-m"] = c.grid_m();
    if (c.command == "run-vcal") j["mprime"] = c.mprime > 0 ? c.mprime : 2 * c.grid_m();
    j["seed"] = c.seed;
    j["reps"] = c.reps;
    j["adversary"] = c.adversary_spec();
    j["class"] = c.class_spec();
    if (c.command == "run-multical" || c.command == "run-omni" || c.command == "run-oracle-bench")
        j["oracle"] = c.oracle_spec();
    if (c.command == "run-omni") j["losses"] = c.losses;
    if (c.command == "run-conformal") {
        j["q"] = c.q;
        j["radius"] = c.radius;
    }
    j["gamma"] = c.gamma;
    j["eta"] = c.eta;
    j["rho"] = c.rho;
    j["trace-points"] = c.trace_points;
    return j;
}

void validate(const ExperimentConfig& c) {
    if (c.T < 1) throw ConfigError("T must be >= 1");
    if (c.grid_m() < 1) throw ConfigError("grid-m must be >= 1");
    if (c.reps < 1) throw ConfigError("reps must be >= 1");
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(c.q > 0.0 && c.q < 1.0)) throw ConfigError("q must lie in (0,1)");
    if (!(c.rho > 0.0 && c.rho < 1.0)) throw ConfigError("rho must lie in (0,1)");
    if (c.trace_points < 1) throw ConfigError("trace-points must be >= 1");
}

// ---------------------------------------------------------------------------
// Classes and losses

namespace {

std::size_t positive(const std::string& spec, const std::string& v) {
    const auto n = to_uint(spec, v);
    if (n == 0) throw ConfigError("class spec '" + spec + "': count must be >= 1");
    return n;
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

FunctionClass make_class(const std::string& spec, std::size_t d) {
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (head == "linear" && !arg.empty()) {
        // linear:<B> or linear:<d>:<B>; a stated d must match the adversary.
        std::string barg = arg;
        if (const auto c2 = arg.find(':'); c2 != std::string::npos) {
            if (to_uint(spec, arg.substr(0, c2)) != d)
                throw ConfigError("class spec '" + spec + "' does not match feature dimension " + std::to_string(d));
            barg = arg.substr(c2 + 1);
        }
        const double B = to_double(spec, barg);
        if (!(B > 0.0)) throw ConfigError("linear class bound must be > 0");
        return LinearBall{d, B};
    }
    if ((head == "csv" || head == "finite") && !arg.empty()) return read_finite_class_csv(arg, d);
    if (head == "finite-boolean" && !arg.empty()) {
        return read_finite_class_csv(arg, d, true);
    }
    if ((head == "bank" || head == "boolbank") && !arg.empty()) {
        const std::size_t n = positive(spec, arg);
        if (d == 0) throw ConfigError("predictor banks need d >= 1");
        // bank cycles step(x_i > 0), clip(1/2 + x_i), clip(1/2 - x_i), step(x_i < 0) over features;
        // boolbank cycles step(x_i > c) over thresholds c in {0, 0.3, -0.3}. Both start with I.
        std::vector<Predictor> ps;
        for (std::size_t k = 0; ps.size() + 1 < n; ++k) {
            const std::size_t i = k % d;
            const std::size_t kind = (k / d) % (head == "bank" ? 4 : 3);
            const std::string xi = "x" + std::to_string(i);
            if (head == "bank") {
                switch (kind) {
                    case 0: ps.push_back({xi + ">0", [i](const Example& x) { return x.x[i] > 0 ? 1.0 : 0.0; }}); break;
                    case 1: ps.push_back({"clip(.5+" + xi + ")", [i](const Example& x) { return clip01(0.5 + x.x[i]); }}); break;
                    case 2: ps.push_back({"clip(.5-" + xi + ")", [i](const Example& x) { return clip01(0.5 - x.x[i]); }}); break;
                    default: ps.push_back({xi + "<0", [i](const Example& x) { return x.x[i] < 0 ? 1.0 : 0.0; }}); break;
                }
            } else {
                const double c = kind == 0 ? 0.0 : (kind == 1 ? 0.3 : -0.3);
                ps.push_back({xi + ">" + fmt(c), [i, c](const Example& x) { return x.x[i] > c ? 1.0 : 0.0; }});
            }
        }
        return make_finite_class(std::move(ps), 1.0);
    }
    throw ConfigError("unknown class spec '" + spec + "'");
}

FiniteClass read_finite_class_csv(const std::filesystem::path& path, std::size_t d, bool boolean) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read class file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty class file");
    const auto header = split(trim(line), ',');
    if (header.size() != d + 3 || header[0] != "name" || header[1] != "transform" || header[2] != "bias")
        throw ConfigError(path.string() + ": header must be name,transform,bias,w_0..w_" + std::to_string(d - 1));
    std::vector<Predictor> ps;
    double B = 0.0;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != d + 3) throw ConfigError(where + ": expected " + std::to_string(d + 3) + " fields");
        const std::string name = trim(f[0]), tr = trim(f[1]);
        const double bias = to_double(where, trim(f[2]));
        std::vector<double> w(d);
        double wn = 0.0;
        for (std::size_t k = 0; k < d; ++k) w[k] = to_double(where, trim(f[3 + k])), wn += w[k] * w[k];
        auto lin = [w, bias](const Example& x) {
            double s = bias;
            for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * x.x[k];
            return s;
        };
        if (tr == "linear") {
            const double sup = std::fabs(bias) + std::sqrt(wn);  // sup over ||x|| <= 1
            B = std::max(B, sup * sup);
            ps.push_back({name, lin});
        } else if (tr == "clip") {
            B = std::max(B, 1.0);
            ps.push_back({name, [lin](const Example& x) { return clip01(lin(x)); }});
        } else if (tr == "step") {
            B = std::max(B, 1.0);
            ps.push_back({name, [lin](const Example& x) { return lin(x) > 0.0 ? 1.0 : 0.0; }});
        } else {
            throw ConfigError(where + ": unknown transform '" + tr + "'");
        }
        if (boolean && tr != "step") throw ConfigError(where + ": boolean classes allow only the step transform");
    }
    return make_finite_class(std::move(ps), std::max(B, 1.0));
}

std::vector<LossSpec> make_losses(const std::string& spec) {
    if (spec == "builtin") return builtin_convex_losses();
    if (spec == "proper") return builtin_proper_losses();
    std::vector<LossSpec> out;
    for (const auto& name : split(spec, ',')) out.push_back(make_loss(trim(name)));
    if (out.empty()) throw ConfigError("empty loss list");
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation and output

Summary aggregate(const std::vector<Record>& records) {
    if (records.empty()) throw Error("aggregate needs at least one record");
    Summary s;
    for (const auto& [k, v] : records[0]) s.metrics.push_back(k), s.mean.push_back(0.0), s.min.push_back(v), s.max.push_back(v);
    std::vector<CompensatedSum> sums(s.metrics.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].size() != s.metrics.size()) throw Error("aggregate: record " + std::to_string(r) + " has a different shape");
        for (std::size_t k = 0; k < s.metrics.size(); ++k) {
            if (records[r][k].first != s.metrics[k])
                throw Error("aggregate: record " + std::to_string(r) + " has metric '" + records[r][k].first +
                            "' where '" + s.metrics[k] + "' was expected");
            const double v = records[r][k].second;
            sums[k].add(v);
            s.min[k] = std::min(s.min[k], v);
            s.max[k] = std::max(s.max[k], v);
        }
    }
    for (std::size_t k = 0; k < s.metrics.size(); ++k) s.mean[k] = sums[k].value() / static_cast<double>(records.size());
    return s;
}

Json bound_json(const BoundCheck& b) {
    Json j;
    j["name"] = b.name;
    j["measured"] = b.measured;
    j["bound"] = b.bound;
    j["holds"] = b.holds;
    if (!b.note.empty()) j["note"] = b.note;
    return j;
}

std::vector<std::size_t> checkpoints(std::size_t T, std::size_t points) {
    std::vector<std::size_t> out;
    for (std::size_t k = 1; k <= points; ++k) {
        const std::size_t t = (T * k + points - 1) / points;
        if (t >= 1 && (out.empty() || t > out.back())) out.push_back(t);
    }
    return out;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
    std::string s = "rep,t,K2,regret\n";
    for (const auto& r : rows)
        s += std::to_string(r.rep) + "," + std::to_string(r.t) + "," + (r.has_K2 ? fmt(r.K2) : "") + "," + fmt(r.regret) + "\n";
    write_text(path, s);
}

std::string trace_svg(const std::vector<TraceRow>& rows, const std::string& title) {
    const double W = 640, H = 360, L = 60, R = 20, Tp = 30, Bt = 40;
    std::vector<const TraceRow*> r0;
    for (const auto& r : rows)
        if (r.rep == 0) r0.push_back(&r);
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" viewBox=\"0 0 640 360\">\n";
    s += "<rect width=\"640\" height=\"360\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(L) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" + title + "</text>\n";
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - Bt) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - Bt) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(Tp) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - Bt) +
         "\" stroke=\"black\"/>\n";
    if (r0.empty()) return s + "</svg>\n";
    const double tmax = static_cast<double>(r0.back()->t);
    // Each series is scaled to its own maximum so both shapes stay visible.
    auto series = [&](bool k2, const char* color, const char* label, double ylab) {
        double ymax = 0.0;
        for (const auto* r : r0) ymax = std::max(ymax, std::fabs(k2 ? r->K2 : r->regret));
        if (ymax == 0.0) ymax = 1.0;
        std::string pts;
        for (const auto* r : r0) {
            if (k2 && !r->has_K2) continue;
            const double x = L + (W - L - R) * static_cast<double>(r->t) / tmax;
            const double y = (H - Bt) - (H - Bt - Tp) * (k2 ? r->K2 : r->regret) / ymax;
            pts += num(x) + "," + num(y) + " ";
        }
        if (!pts.empty()) pts.pop_back();
        std::string out = "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        out += "<text x=\"" + num(W - R - 200) + "\" y=\"" + num(ylab) + "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" +
               color + "\">" + label + " (max " + fmt(ymax) + ")</text>\n";
        return out;
    };
    s += series(true, "#1f77b4", "K2", 40);
    s += series(false, "#d62728", "regret", 54);
    s += "<text x=\"" + num(W - R - 40) + "\" y=\"" + num(H - 12) + "\" font-family=\"sans-serif\" font-size=\"11\">t = " +
         std::to_string(r0.back()->t) + "</text>\n";
    return s + "</svg>\n";
}

}  // namespace omnical::cli
