#include "rnnfc/evalsearch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace rnnfc {

// ---------------------------------------------------------------------------
// Metrics

double nrmse(const Matrix& y, const Matrix& ystar)
{
    if (y.rows() != ystar.rows() || y.cols() != ystar.cols()) throw std::invalid_argument("nrmse: shape mismatch");
    if (ystar.cols() < 2) throw std::invalid_argument("nrmse: need at least 2 steps");
    const Vector mean = ystar.rowwise().mean();
    const double den = (ystar.colwise() - mean).squaredNorm();
    if (!(den > 0.0)) throw std::domain_error("nrmse: constant ground truth");
    return std::sqrt((y - ystar).squaredNorm() / den);
}

double accuracy_psi(const Matrix& y, const Matrix& ystar)
{
    return 1.0 - nrmse(y, ystar);
}

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(Arch a)
{
    switch (a) {
    case Arch::ernn: return "ernn";
    case Arch::lstm: return "lstm";
    case Arch::gru: return "gru";
    case Arch::narx: return "narx";
    case Arch::esn: return "esn";
    }
    return "?";
}

Arch arch_from_string(std::string_view s)
{
    for (Arch a : {Arch::ernn, Arch::lstm, Arch::gru, Arch::narx, Arch::esn})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

void ModelConfig::validate() const
{
    switch (arch) {
    case Arch::ernn:
    case Arch::lstm:
    case Arch::gru:
        if (rnn.hidden < 1) throw std::invalid_argument("config: hidden must be positive");
        if (!(rnn.optimizer.eta0 > 0.0)) throw std::invalid_argument("config: eta must be positive");
        rnn.loss.validate();
        rnn.schedule.validate();
        break;
    case Arch::narx: narx.validate(); break;
    case Arch::esn: esn.validate(); break;
    }
}

Json to_json(const ModelConfig& c)
{
    Json j;
    j["arch"] = std::string(to_string(c.arch));
    switch (c.arch) {
    case Arch::ernn:
    case Arch::lstm:
    case Arch::gru: {
        const auto& r = c.rnn;
        j["hidden"] = r.hidden;
        j["optimizer"] = std::string(to_string(r.optimizer.kind));
        j["eta"] = r.optimizer.eta0;
        j["decay"] = std::string(to_string(r.optimizer.decay));
        j["alpha"] = r.optimizer.alpha;
        j["l1"] = r.loss.l1;
        j["l2"] = r.loss.l2;
        j["p_drop"] = r.loss.p_drop;
        j["tau_b"] = r.schedule.tau_b;
        j["tau_f"] = r.schedule.tau_f;
        j["epochs"] = r.schedule.epochs;
        j["transient"] = r.schedule.transient;
        j["clip"] = r.schedule.clip_threshold ? Json(*r.schedule.clip_threshold) : Json(nullptr);
        break;
    }
    case Arch::narx: {
        const auto& n = c.narx;
        j["dx"] = n.dx;
        j["dy"] = n.dy;
        j["hidden"] = n.hidden;
        j["layers"] = n.layers;
        j["l2"] = n.l2;
        j["eta"] = n.eta0;
        j["epochs"] = n.epochs;
        j["max_inflations"] = n.max_inflations;
        j["transient"] = n.transient;
        break;
    }
    case Arch::esn: {
        const auto& e = c.esn;
        j["hidden"] = e.hidden;
        j["rho"] = e.rho;
        j["rc"] = e.rc;
        j["noise_var"] = e.noise_var;
        j["omega_i"] = e.omega_i;
        j["omega_o"] = e.omega_o;
        j["omega_f"] = e.omega_f;
        j["l2"] = e.l2;
        j["washout"] = e.washout;
        break;
    }
    }
    return j;
}

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out)
{
    if (!j.contains(key) || j.at(key).is_null()) return;
    const Json& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number()) throw std::invalid_argument(std::string("config: '") + key + "' must be a number");
        const double d = v.get<double>();
        if (d != std::floor(d)) throw std::invalid_argument(std::string("config: '") + key + "' must be an integer");
        out = static_cast<T>(d);
    } else {
        if (!v.is_number()) throw std::invalid_argument(std::string("config: '") + key + "' must be a number");
        out = v.get<T>();
    }
}

std::string read_string(const Json& j, const char* key, std::string fallback)
{
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw std::invalid_argument(std::string("config: '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

} // namespace

ModelConfig model_config_from_json(const Json& j)
{
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    if (!j.contains("arch")) throw std::invalid_argument("config: missing 'arch'");
    ModelConfig c;
    c.arch = arch_from_string(read_string(j, "arch", ""));
    switch (c.arch) {
    case Arch::ernn:
    case Arch::lstm:
    case Arch::gru: {
        auto& r = c.rnn;
        read(j, "hidden", r.hidden);
        r.optimizer.kind = optimizer_from_string(read_string(j, "optimizer", std::string(to_string(r.optimizer.kind))));
        read(j, "eta", r.optimizer.eta0);
        r.optimizer.decay = decay_from_string(read_string(j, "decay", std::string(to_string(r.optimizer.decay))));
        read(j, "alpha", r.optimizer.alpha);
        read(j, "l1", r.loss.l1);
        read(j, "l2", r.loss.l2);
        read(j, "p_drop", r.loss.p_drop);
        read(j, "tau_b", r.schedule.tau_b);
        read(j, "tau_f", r.schedule.tau_f);
        read(j, "epochs", r.schedule.epochs);
        read(j, "transient", r.schedule.transient);
        if (j.contains("clip") && !j.at("clip").is_null()) {
            double clip = 0.0;
            read(j, "clip", clip);
            r.schedule.clip_threshold = clip;
        }
        break;
    }
    case Arch::narx: {
        auto& n = c.narx;
        if (j.contains("tdl")) {
            read(j, "tdl", n.dx);
            n.dy = n.dx;
        }
        read(j, "dx", n.dx);
        read(j, "dy", n.dy);
        read(j, "hidden", n.hidden);
        read(j, "layers", n.layers);
        read(j, "l2", n.l2);
        read(j, "eta", n.eta0);
        read(j, "epochs", n.epochs);
        read(j, "max_inflations", n.max_inflations);
        read(j, "transient", n.transient);
        break;
    }
    case Arch::esn: {
        auto& e = c.esn;
        read(j, "hidden", e.hidden);
        read(j, "rho", e.rho);
        read(j, "rc", e.rc);
        read(j, "noise_var", e.noise_var);
        read(j, "omega_i", e.omega_i);
        read(j, "omega_o", e.omega_o);
        read(j, "omega_f", e.omega_f);
        read(j, "l2", e.l2);
        read(j, "washout", e.washout);
        break;
    }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Train and score

namespace {

template <typename P>
std::optional<Matrix> fit_predict_rnn(const TrainConfig& cfg, const Matrix& xt, const Matrix& yt, const Matrix& xe, RngStream& rng)
{
    const TrainResult<P> r = train<P>(xt, yt, cfg, rng);
    if (r.diverged) return std::nullopt;
    return predict(r.params, xe);
}

} // namespace

RunOutcome train_and_score(const ModelConfig& cfg, const TaskDataset& data, Index train_end, Index eval_begin, Index eval_end,
                           Index transient, std::uint64_t seed)
{
    if (train_end < 1 || train_end > data.size() || eval_begin < 0 || eval_end > data.size() || eval_begin >= eval_end)
        throw std::invalid_argument("train_and_score: bad ranges");
    const Matrix xt = data.x_part(0, train_end), yt = data.y_part(0, train_end);
    const Matrix xe = data.x_part(eval_begin, eval_end), ye = data.y_part(eval_begin, eval_end);
    RngStream rng{seed};

    Index skip = transient;
    std::optional<Matrix> pred;
    try {
        switch (cfg.arch) {
        case Arch::ernn: pred = fit_predict_rnn<ErnnParams>(cfg.rnn, xt, yt, xe, rng); break;
        case Arch::lstm: pred = fit_predict_rnn<LstmParams>(cfg.rnn, xt, yt, xe, rng); break;
        case Arch::gru: pred = fit_predict_rnn<GruParams>(cfg.rnn, xt, yt, xe, rng); break;
        case Arch::narx: {
            const NarxTrainResult r = train_series_parallel(xt, yt, cfg.narx, rng);
            if (!r.diverged) {
                const Index warm = r.params.order();
                skip = std::max(skip, warm);
                pred = closed_loop_predict(r.params, xe, ye.leftCols(std::min(warm, ye.cols())), warm);
            }
            break;
        }
        case Arch::esn: {
            const EsnModel m = train_esn(xt, yt, cfg.esn, rng);
            pred = esn_predict(m, xe);
            break;
        }
        }
    } catch (const std::domain_error&) {
        pred.reset(); // singular ridge system or a non-finite optimizer update
    }

    RunOutcome out;
    out.begin = eval_begin + skip;
    const Index n = eval_end - out.begin;
    if (n < 2) throw std::invalid_argument("train_and_score: evaluation segment shorter than the transient");
    out.truth = data.raw_labels(out.begin, n);
    if (!pred || !pred->allFinite()) {
        out.diverged = true;
        return out;
    }
    out.prediction = data.to_raw(pred->row(0).tail(n), out.begin);
    if (!out.prediction.allFinite()) {
        out.diverged = true;
        return out;
    }
    out.nrmse = nrmse(out.prediction, out.truth);
    return out;
}

// ---------------------------------------------------------------------------
// Spaces

Json to_json(const HyperSpace& s)
{
    Json j;
    j["arch"] = std::string(to_string(s.arch));
    j["base"] = s.base;
    j["l2_with_dropout"] = s.l2_with_dropout;
    Json ps = Json::array();
    for (const auto& d : s.params) {
        Json p{{"key", d.key}, {"kind", d.kind}};
        if (d.kind == "uniform" || d.kind == "log10" || d.kind == "int") {
            p["lo"] = d.lo;
            p["hi"] = d.hi;
        }
        if (d.kind == "int") p["step"] = d.step;
        if (d.kind == "choice") p["values"] = d.values;
        if (d.kind == "scale") {
            p["of"] = d.of;
            p["factor"] = d.factor;
        }
        if (d.when) p["when"] = Json{{"key", d.when->first}, {"value", d.when->second}};
        ps.push_back(p);
    }
    j["params"] = ps;
    return j;
}

HyperSpace hyper_space_from_json(const Json& j)
{
    if (!j.is_object() || !j.contains("arch")) throw std::invalid_argument("space: expected an object with 'arch'");
    HyperSpace s;
    s.arch = arch_from_string(j.at("arch").get<std::string>());
    if (j.contains("base")) s.base = j.at("base");
    s.l2_with_dropout = j.value("l2_with_dropout", false);
    std::set<std::string> known;
    for (const auto& p : j.value("params", Json::array())) {
        Dist d;
        d.key = p.at("key").get<std::string>();
        d.kind = p.at("kind").get<std::string>();
        if (d.kind == "uniform" || d.kind == "log10" || d.kind == "int") {
            d.lo = p.at("lo").get<double>();
            d.hi = p.at("hi").get<double>();
            if (!(d.lo <= d.hi)) throw std::invalid_argument("space: '" + d.key + "' has lo > hi");
            if (d.kind == "int") {
                d.step = p.value("step", 1.0);
                if (!(d.step > 0.0)) throw std::invalid_argument("space: '" + d.key + "' needs a positive step");
            }
        } else if (d.kind == "choice") {
            d.values = p.at("values").get<std::vector<Json>>();
            if (d.values.empty()) throw std::invalid_argument("space: '" + d.key + "' has no values");
        } else if (d.kind == "scale") {
            d.of = p.at("of").get<std::string>();
            d.factor = p.at("factor").get<double>();
            if (!known.count(d.of) && !s.base.contains(d.of)) throw std::invalid_argument("space: '" + d.key + "' scales an unknown key");
        } else {
            throw std::invalid_argument("space: unknown kind '" + d.kind + "'");
        }
        if (p.contains("when")) d.when = std::make_pair(p.at("when").at("key").get<std::string>(), p.at("when").at("value"));
        known.insert(d.key);
        s.params.push_back(std::move(d));
    }
    s.base["arch"] = std::string(to_string(s.arch));
    return s;
}

namespace {

Dist uniform(std::string key, double lo, double hi)
{
    Dist d;
    d.key = std::move(key);
    d.kind = "uniform";
    d.lo = lo;
    d.hi = hi;
    return d;
}

Dist log10u(std::string key, double lo, double hi, std::pair<std::string, Json> when)
{
    Dist d = uniform(std::move(key), lo, hi);
    d.kind = "log10";
    d.when = std::move(when);
    return d;
}

Dist integer(std::string key, double lo, double hi, double step = 1.0)
{
    Dist d = uniform(std::move(key), lo, hi);
    d.kind = "int";
    d.step = step;
    return d;
}

Dist choice(std::string key, std::vector<Json> values)
{
    Dist d;
    d.key = std::move(key);
    d.kind = "choice";
    d.values = std::move(values);
    return d;
}

std::vector<Json> powers_of_two(int from, int to)
{
    std::vector<Json> v;
    for (int e = from; e >= to; --e) v.emplace_back(std::ldexp(1.0, e));
    return v;
}

} // namespace

HyperSpace preset_space(std::string_view name)
{
    HyperSpace s;
    if (name == "paper-ernn" || name == "paper-lstm" || name == "paper-gru") {
        s.arch = name == "paper-ernn" ? Arch::ernn : name == "paper-lstm" ? Arch::lstm : Arch::gru;
        s.base = {{"decay", "none"}, {"alpha", 0.0}, {"transient", 50}};
        s.l2_with_dropout = true;
        const std::vector<Json> hidden = s.arch == Arch::ernn   ? std::vector<Json>{40, 60, 80, 100}
                                         : s.arch == Arch::lstm ? std::vector<Json>{20, 30, 40, 50}
                                                                : std::vector<Json>{23, 35, 46, 58};
        s.params.push_back(choice("hidden", hidden));
        s.params.push_back(choice("optimizer", {"sgd", "nesterov", "adam"}));
        s.params.push_back(log10u("eta", -3.0, -1.0, {"optimizer", "sgd"}));
        s.params.push_back(log10u("eta", -4.0, -2.0, {"optimizer", "nesterov"}));
        s.params.push_back(log10u("eta", -4.0, -2.0, {"optimizer", "adam"}));
        for (const char* o : {"sgd", "nesterov"}) {
            Dist dec = choice("decay", {"fractional"});
            dec.when = std::make_pair(std::string("optimizer"), Json(o));
            s.params.push_back(dec);
            Dist a = choice("alpha", {1e-6});
            a.when = dec.when;
            s.params.push_back(a);
        }
        s.params.push_back(uniform("l1", 0.0, 0.1));
        s.params.push_back(uniform("l2", 0.0, 0.1));
        s.params.push_back(choice("p_drop", {0.0, 0.1, 0.2, 0.3, 0.5}));
        s.params.push_back(choice("tau_f", {10, 15, 20, 25, 30}));
        Dist tb;
        tb.key = "tau_b";
        tb.kind = "scale";
        tb.of = "tau_f";
        tb.factor = 2.0;
        s.params.push_back(tb);
    } else if (name == "paper-narx") {
        s.arch = Arch::narx;
        s.base = {{"transient", 50}, {"max_inflations", 10}};
        s.params.push_back(integer("tdl", 2, 10));
        s.params.push_back(integer("layers", 1, 5));
        s.params.push_back(integer("hidden", 5, 20));
        s.params.push_back(choice("l2", powers_of_two(-1, -10)));
        s.params.push_back(choice("eta", powers_of_two(-5, -25)));
    } else if (name == "paper-esn") {
        s.arch = Arch::esn;
        s.base = {{"washout", 50}};
        s.params.push_back(integer("hidden", 400, 900, 50));
        s.params.push_back(uniform("rho", 0.5, 1.8));
        s.params.push_back(uniform("rc", 0.15, 0.45));
        s.params.push_back(uniform("noise_var", 0.0, 0.1));
        s.params.push_back(uniform("omega_i", 0.1, 1.0));
        s.params.push_back(uniform("omega_o", 0.1, 1.0));
        s.params.push_back(uniform("omega_f", 0.0, 0.5));
        s.params.push_back(uniform("l2", 0.001, 0.4));
    } else {
        throw std::invalid_argument("unknown space preset '" + std::string(name) + "'");
    }
    s.base["arch"] = std::string(to_string(s.arch));
    return s;
}

ModelConfig table_config(Arch arch, std::string_view task)
{
    const int row = task == "mg" ? 0 : task == "narma" ? 1 : task == "mso" ? 2 : -1;
    if (row < 0) throw std::invalid_argument("no fixed configuration for task '" + std::string(task) + "'");
    Json j;
    j["arch"] = std::string(to_string(arch));
    switch (arch) {
    case Arch::esn: {
        static const double t[3][8] = {{800, 1.334, 0.234, 0.001, 0.597, 0.969, 0.260, 0.066},
                                       {700, 0.932, 0.322, 0.013, 0.464, 0.115, 0.045, 0.343},
                                       {600, 1.061, 0.231, 0.002, 0.112, 0.720, 0.002, 0.177}};
        const auto& r = t[row];
        j.update({{"hidden", static_cast<int>(r[0])}, {"rho", r[1]}, {"rc", r[2]}, {"noise_var", r[3]}, {"omega_i", r[4]},
                  {"omega_o", r[5]}, {"omega_f", r[6]}, {"l2", r[7]}});
        break;
    }
    case Arch::narx: {
        static const double t[3][5] = {{15, 2, 6, 3.8e-6, 0.0209}, {17, 2, 10, 2.4e-4, 0.4367}, {12, 5, 2, 0.002, 0.446}};
        const auto& r = t[row];
        j.update({{"hidden", static_cast<int>(r[0])}, {"layers", static_cast<int>(r[1])}, {"tdl", static_cast<int>(r[2])},
                  {"eta", r[3]}, {"l2", r[4]}, {"epochs", 2000}});
        break;
    }
    default: {
        struct Row {
            int tau_b, tau_f, hidden;
            const char* opt;
            double eta, l2;
        };
        static const Row ernn[3] = {{20, 10, 80, "adam", 0.00026, 0.00037},
                                    {50, 25, 80, "nesterov", 0.00056, 1e-5},
                                    {50, 25, 60, "adam", 0.00041, 0.00258}};
        static const Row lstm[3] = {{50, 25, 40, "adam", 0.00051, 0.00065},
                                    {40, 20, 40, "adam", 0.00719, 0.00087},
                                    {50, 25, 20, "adam", 0.00091, 0.0012}};
        static const Row gru[3] = {{40, 20, 46, "sgd", 0.02253, 6.88e-6},
                                   {40, 20, 46, "adam", 0.00025, 0.00378},
                                   {50, 25, 35, "adam", 0.00333, 0.00126}};
        const Row& r = (arch == Arch::ernn ? ernn : arch == Arch::lstm ? lstm : gru)[row];
        const bool annealed = std::string_view(r.opt) != "adam";
        j.update({{"tau_b", r.tau_b}, {"tau_f", r.tau_f}, {"hidden", r.hidden}, {"optimizer", r.opt}, {"eta", r.eta},
                  {"l1", 0.0}, {"l2", r.l2}, {"p_drop", 0.0}, {"decay", annealed ? "fractional" : "none"},
                  {"alpha", annealed ? 1e-6 : 0.0}, {"epochs", 2000}});
        break;
    }
    }
    return model_config_from_json(j);
}

namespace {

bool integral(double v) { return std::floor(v) == v && std::abs(v) < 9e15; }

Json number(double v, bool as_int)
{
    return as_int ? Json(static_cast<std::int64_t>(v)) : Json(v);
}

} // namespace

Json sample_config_json(const HyperSpace& space, RngStream& rng)
{
    Json cfg = space.base;
    cfg["arch"] = std::string(to_string(space.arch));
    double l2_max = 0.0;
    for (const auto& d : space.params) {
        if (d.when && (!cfg.contains(d.when->first) || cfg.at(d.when->first) != d.when->second)) continue;
        if (d.kind == "uniform") {
            cfg[d.key] = rng.uniform(d.lo, d.hi);
            if (d.key == "l2") l2_max = d.hi;
        } else if (d.kind == "log10") {
            cfg[d.key] = std::pow(10.0, rng.uniform(d.lo, d.hi));
        } else if (d.kind == "int") {
            const auto n = static_cast<Index>(std::floor((d.hi - d.lo) / d.step + 1e-9)) + 1;
            cfg[d.key] = number(d.lo + d.step * static_cast<double>(rng.uniform_int(0, n - 1)), integral(d.lo) && integral(d.step));
        } else if (d.kind == "choice") {
            cfg[d.key] = d.values[static_cast<std::size_t>(rng.uniform_int(0, static_cast<Index>(d.values.size()) - 1))];
        } else if (d.kind == "scale") {
            const Json& src = cfg.at(d.of);
            cfg[d.key] = number(src.get<double>() * d.factor, src.is_number_integer() && integral(d.factor));
        } else {
            throw std::invalid_argument("space: unknown kind '" + d.kind + "'");
        }
    }
    if (space.l2_with_dropout && cfg.value("p_drop", 0.0) > 0.0 && cfg.value("l2", 0.0) == 0.0) {
        const double hi = l2_max > 0.0 ? l2_max : 0.1;
        cfg["l2"] = hi - rng.uniform(0.0, hi); // (0, hi]
    }
    return cfg;
}

ModelConfig sample_config(const HyperSpace& space, RngStream& rng)
{
    return model_config_from_json(sample_config_json(space, rng));
}

// ---------------------------------------------------------------------------
// Search

std::string_view to_string(TrialStatus s)
{
    return s == TrialStatus::ok ? "ok" : "diverged";
}

Json to_json(const TrialResult& t)
{
    Json j{{"index", t.index},
           {"config", t.config},
           {"seed", t.seed},
           {"valid_nrmse", std::isfinite(t.valid_nrmse) ? Json(t.valid_nrmse) : Json(nullptr)},
           {"status", std::string(to_string(t.status))},
           {"seconds", t.seconds}};
    if (t.test_nrmse) j["test_nrmse"] = *t.test_nrmse;
    return j;
}

TrialResult trial_from_json(const Json& j)
{
    TrialResult t;
    t.index = j.at("index").get<Index>();
    t.config = j.at("config");
    t.seed = j.at("seed").get<std::uint64_t>();
    const Json& v = j.at("valid_nrmse");
    t.valid_nrmse = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
    const std::string st = j.at("status").get<std::string>();
    if (st != "ok" && st != "diverged") throw std::invalid_argument("trial: unknown status '" + st + "'");
    t.status = st == "ok" ? TrialStatus::ok : TrialStatus::diverged;
    t.seconds = j.value("seconds", 0.0);
    if (j.contains("test_nrmse")) t.test_nrmse = j.at("test_nrmse").get<double>();
    return t;
}

std::uint64_t trial_seed(std::uint64_t master, Index index)
{
    return detail::splitmix64(detail::splitmix64(master) ^ detail::splitmix64(static_cast<std::uint64_t>(index) + 1));
}

void rank_trials(std::vector<TrialResult>& trials)
{
    std::sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
        if (a.valid_nrmse != b.valid_nrmse) return a.valid_nrmse < b.valid_nrmse;
        return a.index < b.index;
    });
}

namespace {

void apply_epochs(Json& cfg, Arch arch, int rnn_epochs, int narx_epochs)
{
    if (arch == Arch::narx)
        cfg["epochs"] = narx_epochs;
    else if (arch != Arch::esn)
        cfg["epochs"] = rnn_epochs;
}

TrialResult run_trial(const HyperSpace& space, const TaskDataset& data, Index index, std::uint64_t master, const EvalProtocol& protocol)
{
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult t;
    t.index = index;
    t.seed = trial_seed(master, index);
    RngStream rng{t.seed};
    RngStream sample_rng = rng.split(0);
    t.config = sample_config_json(space, sample_rng);
    apply_epochs(t.config, space.arch, protocol.rnn_epochs, protocol.narx_epochs);
    const ModelConfig cfg = model_config_from_json(t.config);
    const RunOutcome r = train_and_score(cfg, data, data.splits.train_end, data.splits.train_end, data.splits.valid_end,
                                         protocol.transient, rng.split(1).next_u64());
    t.valid_nrmse = r.diverged ? std::numeric_limits<double>::infinity() : r.nrmse;
    t.status = r.diverged || !std::isfinite(r.nrmse) ? TrialStatus::diverged : TrialStatus::ok;
    if (t.status == TrialStatus::diverged) t.valid_nrmse = std::numeric_limits<double>::infinity();
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return t;
}

} // namespace

std::vector<TrialResult> run_search(const HyperSpace& space, const TaskDataset& data, Index budget, int workers,
                                    std::uint64_t master_seed, const EvalProtocol& protocol, const std::vector<TrialResult>& done,
                                    const std::function<void(const TrialResult&)>& on_trial)
{
    if (budget < 1) throw std::invalid_argument("run_search: budget must be >= 1");
    if (workers < 1) throw std::invalid_argument("run_search: workers must be >= 1");

    std::vector<std::optional<TrialResult>> slots(static_cast<std::size_t>(budget));
    for (const auto& t : done)
        if (t.index >= 0 && t.index < budget) slots[static_cast<std::size_t>(t.index)] = t;
    std::vector<Index> todo;
    for (Index i = 0; i < budget; ++i)
        if (!slots[static_cast<std::size_t>(i)]) todo.push_back(i);

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= todo.size()) return;
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            try {
                TrialResult t = run_trial(space, data, todo[k], master_seed, protocol);
                std::lock_guard lock(mu);
                if (on_trial) on_trial(t);
                slots[static_cast<std::size_t>(t.index)] = std::move(t);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(1, todo.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<TrialResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    rank_trials(out);
    return out;
}

FinalEval final_eval(const ModelConfig& cfg, const TaskDataset& data, const EvalProtocol& protocol, std::uint64_t seed)
{
    if (protocol.restarts < 1) throw std::invalid_argument("final_eval: restarts must be >= 1");
    ModelConfig run = cfg;
    if (run.arch == Arch::narx)
        run.narx.epochs = protocol.test_epochs;
    else if (run.arch != Arch::esn)
        run.rnn.schedule.epochs = protocol.test_epochs;

    FinalEval f;
    double sum = 0.0, sq = 0.0;
    Index finite = 0;
    for (int r = 0; r < protocol.restarts; ++r) {
        RunOutcome o = train_and_score(run, data, data.splits.valid_end, data.splits.valid_end, data.splits.size, protocol.transient,
                                       trial_seed(seed, r));
        const double score = o.diverged ? std::numeric_limits<double>::infinity() : o.nrmse;
        f.test_nrmse.push_back(score);
        if (!std::isfinite(score)) continue;
        sum += score;
        sq += score * score;
        ++finite;
        if (score < f.best) {
            f.best = score;
            f.best_restart = r;
            f.best_run = std::move(o);
        }
    }
    if (finite == 0) throw std::runtime_error("final_eval: every restart diverged");
    f.mean = sum / static_cast<double>(finite);
    f.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(finite) - f.mean * f.mean));
    return f;
}

} // namespace rnnfc
