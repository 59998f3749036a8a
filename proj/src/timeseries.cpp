#include "rnnfc/timeseries.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rnnfc {

// ---------------------------------------------------------------------------
// Generators

double mackey_glass_derivative(double x, double x_delayed, const MackeyGlassParams& p)
{
    return p.alpha * x_delayed / (1.0 + std::pow(x_delayed, 10)) - p.beta * x;
}

Vector gen_mackey_glass(Index n, const MackeyGlassParams& p)
{
    if (n <= 0) throw std::invalid_argument("gen_mackey_glass: n must be positive");
    if (!(p.dt > 0.0) || p.stride < 1) throw std::invalid_argument("gen_mackey_glass: bad step or stride");
    if (p.tau < p.dt) throw std::invalid_argument("gen_mackey_glass: delay shorter than the step");

    const double lag = p.tau / p.dt; // delay in grid steps
    const Index steps = (n - 1) * p.stride;
    std::vector<double> hist(static_cast<std::size_t>(steps + 1));
    hist[0] = p.x0;

    // x at grid position u (fractional), constant x0 for u <= 0.
    auto at = [&](double u) {
        if (u <= 0.0) return p.x0;
        const auto k = static_cast<std::size_t>(std::floor(u));
        const double f = u - static_cast<double>(k);
        return f == 0.0 ? hist[k] : (1.0 - f) * hist[k] + f * hist[k + 1];
    };

    for (Index k = 0; k < steps; ++k) {
        const double x = hist[static_cast<std::size_t>(k)];
        const double u = static_cast<double>(k) - lag;
        const double d0 = at(u), dh = at(u + 0.5), d1 = at(u + 1.0);
        const double k1 = mackey_glass_derivative(x, d0, p);
        const double k2 = mackey_glass_derivative(x + 0.5 * p.dt * k1, dh, p);
        const double k3 = mackey_glass_derivative(x + 0.5 * p.dt * k2, dh, p);
        const double k4 = mackey_glass_derivative(x + p.dt * k3, d1, p);
        hist[static_cast<std::size_t>(k + 1)] = x + p.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    Vector out(n);
    for (Index i = 0; i < n; ++i) out(i) = hist[static_cast<std::size_t>(i * p.stride)];
    return out;
}

Vector narma_response(const Vector& x, int r)
{
    if (r < 0) throw std::invalid_argument("narma_response: negative order");
    const Index n = x.size();
    Vector y = Vector::Zero(n);
    for (Index t = 0; t + 1 < n; ++t) {
        double acc = 0.0;
        for (Index i = 0; i <= r && t - i >= 0; ++i) acc += y(t - i);
        const double xr = t - r >= 0 ? x(t - r) : 0.0;
        y(t + 1) = 0.3 * y(t) + 0.05 * y(t) * acc + 1.5 * xr * x(t) + 0.1;
    }
    return y;
}

NarmaSeries gen_narma(Index n, std::uint64_t seed, int r, double input_high)
{
    if (n <= r) throw std::invalid_argument("gen_narma: n must exceed the order");
    for (std::uint64_t s = seed; s < seed + 1000; ++s) {
        RngStream rng{s};
        NarmaSeries out;
        out.x.resize(n);
        for (Index t = 0; t < n; ++t) out.x(t) = rng.uniform(0.0, input_high);
        out.y = narma_response(out.x, r);
        out.seed_used = s;
        if (out.y.allFinite() && out.y.cwiseAbs().maxCoeff() <= 1e3) return out;
    }
    throw std::runtime_error("gen_narma: no bounded trajectory in 1000 seeds");
}

Vector gen_mso(Index n)
{
    if (n <= 0) throw std::invalid_argument("gen_mso: n must be positive");
    Vector y(n);
    for (Index t = 0; t < n; ++t) {
        const double s = static_cast<double>(t);
        y(t) = std::sin(0.2 * s) + std::sin(0.311 * s) + std::sin(0.42 * s) + std::sin(0.51 * s);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Ingestion

Index RawSeries::count(Quality q) const
{
    return static_cast<Index>(std::count(flag.begin(), flag.end(), q));
}

std::int64_t parse_iso8601(const std::string& s)
{
    using namespace std::chrono;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int used = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &used) != 3 || used != 10)
        throw std::invalid_argument("bad timestamp '" + s + "'");
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        int u = 0;
        if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d%n", &h, &mi, &u) != 2 || u != 5)
            throw std::invalid_argument("bad timestamp '" + s + "'");
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            if (std::sscanf(s.c_str() + pos + 1, "%2d%n", &se, &u) != 1 || u != 2)
                throw std::invalid_argument("bad timestamp '" + s + "'");
            pos += 3;
        }
    }
    if (pos < s.size() && s[pos] == 'Z') ++pos;
    if (pos != s.size()) throw std::invalid_argument("bad timestamp '" + s + "'");
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 59) throw std::invalid_argument("bad timestamp '" + s + "'");
    return sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + se;
}

std::string format_iso8601(std::int64_t t)
{
    using namespace std::chrono;
    const std::int64_t days = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
    const std::int64_t rem = t - days * 86400;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

namespace {

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(trim(f));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

[[noreturn]] void fail_at(Index line, const std::string& what)
{
    throw std::runtime_error("csv line " + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& f, Index line)
{
    double v = 0.0;
    const char* end = f.data() + f.size();
    auto [p, ec] = std::from_chars(f.data(), end, v);
    if (f.empty() || ec != std::errc{} || p != end) fail_at(line, "unparsable number '" + f + "'");
    return v;
}

} // namespace

RawSeries parse_csv(std::istream& in, const CsvSchema& schema)
{
    std::string line;
    Index lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (!t.empty() && t[0] != '#') {
            header = split_fields(line);
            break;
        }
    }
    if (header.empty()) throw std::runtime_error("csv: empty input");

    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) fail_at(lineno, "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t tcol = column(schema.time_column);
    const std::size_t vcol = column(schema.value_column);
    std::vector<std::size_t> ecols;
    for (const auto& e : schema.exog_columns) ecols.push_back(column(e));

    std::vector<std::int64_t> time;
    std::vector<double> value;
    std::vector<Quality> flag;
    std::vector<std::vector<double>> exog(ecols.size());

    auto push = [&](std::int64_t t, double v, Quality q, const std::vector<double>& ex) {
        time.push_back(t);
        value.push_back(v);
        flag.push_back(q);
        for (std::size_t c = 0; c < ecols.size(); ++c) exog[c].push_back(ex[c]);
    };

    std::vector<double> ex(ecols.size());
    while (std::getline(in, line)) {
        ++lineno;
        const std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto f = split_fields(line);
        if (f.size() != header.size())
            fail_at(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        std::int64_t t = 0;
        try {
            t = parse_iso8601(f[tcol]);
        } catch (const std::invalid_argument& e) {
            fail_at(lineno, e.what());
        }
        const double v = parse_number(f[vcol], lineno);
        for (std::size_t c = 0; c < ecols.size(); ++c) ex[c] = parse_number(f[ecols[c]], lineno);

        if (!time.empty()) {
            if (t <= time.back()) fail_at(lineno, "timestamps not strictly increasing");
            if (schema.step_seconds > 0) {
                const std::int64_t gap = t - time.back();
                if (gap % schema.step_seconds != 0) fail_at(lineno, "timestamp off the declared grid");
                const std::vector<double> zeros(ecols.size(), 0.0);
                for (std::int64_t g = time.back() + schema.step_seconds; g < t; g += schema.step_seconds)
                    push(g, 0.0, Quality::missing, zeros);
            }
        }
        const bool bad = schema.corrupted_marker && v == *schema.corrupted_marker;
        push(t, v, bad ? Quality::corrupted : Quality::ok, ex);
    }

    RawSeries s;
    s.time = std::move(time);
    s.value = Eigen::Map<const Vector>(value.data(), static_cast<Index>(value.size()));
    s.flag = std::move(flag);
    s.exog.resize(static_cast<Index>(ecols.size()), s.size());
    for (std::size_t c = 0; c < ecols.size(); ++c)
        for (Index t = 0; t < s.size(); ++t) s.exog(static_cast<Index>(c), t) = exog[c][static_cast<std::size_t>(t)];
    s.exog_names = schema.exog_columns;
    return s;
}

RawSeries load_csv(const std::string& path, const CsvSchema& schema)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_csv(in, schema);
}

void write_csv(std::ostream& out, const RawSeries& s, const std::string& value_column)
{
    out << "timestamp," << value_column;
    for (const auto& n : s.exog_names) out << ',' << n;
    out << '\n' << std::setprecision(17);
    for (Index t = 0; t < s.size(); ++t) {
        out << (s.time.empty() ? std::to_string(t) : format_iso8601(s.time[static_cast<std::size_t>(t)])) << ',' << s.value(t);
        for (Index c = 0; c < s.exog.rows(); ++c) out << ',' << s.exog(c, t);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Imputation

RawSeries impute_adjacent_weeks(const RawSeries& s, Index period, Index* fallbacks)
{
    if (period <= 0) throw std::invalid_argument("impute_adjacent_weeks: period must be positive");
    if (static_cast<Index>(s.flag.size()) != s.size()) throw std::invalid_argument("impute_adjacent_weeks: flag length mismatch");
    RawSeries out = s;
    const Index n = s.size();
    auto usable = [&](Index i) { return i >= 0 && i < n && s.flag[static_cast<std::size_t>(i)] != Quality::corrupted; };

    double mean = 0.0;
    Index clean = 0;
    for (Index i = 0; i < n; ++i)
        if (s.flag[static_cast<std::size_t>(i)] == Quality::ok) {
            mean += s.value(i);
            ++clean;
        }
    mean = clean > 0 ? mean / static_cast<double>(clean) : 0.0;

    Index fb = 0;
    for (Index i = 0; i < n; ++i) {
        if (s.flag[static_cast<std::size_t>(i)] != Quality::corrupted) continue;
        const bool a = usable(i - period), b = usable(i + period);
        if (a && b)
            out.value(i) = 0.5 * (s.value(i - period) + s.value(i + period));
        else if (a)
            out.value(i) = s.value(i - period);
        else if (b)
            out.value(i) = s.value(i + period);
        else {
            out.value(i) = mean;
            ++fb;
        }
    }
    if (fallbacks) *fallbacks = fb;
    return out;
}

NaturalSpline::NaturalSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y))
{
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("NaturalSpline: need matching knots, at least 2");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("NaturalSpline: knots must increase");
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Thomas algorithm on the interior second derivatives.
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
        diag[i - 1] = 2.0 * (h0 + h1);
        upper[i - 1] = h1;
        rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 1; i < k; ++i) {
        const double lower = x_[i + 1] - x_[i]; // h_i, sub-diagonal entry of row i
        const double w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m_[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (rhs[i] - upper[i] * m_[i + 2]) / diag[i];
}

double NaturalSpline::operator()(double t) const
{
    const std::size_t n = x_.size();
    if (t <= x_.front() || t >= x_.back()) {
        // Linear continuation past the ends (second derivative is zero there).
        const bool left = t <= x_.front();
        const std::size_t a = left ? 0 : n - 2, b = a + 1;
        const double h = x_[b] - x_[a];
        const double slope = (y_[b] - y_[a]) / h + (left ? -h * (2.0 * m_[a] + m_[b]) : h * (m_[a] + 2.0 * m_[b])) / 6.0;
        const double x0 = left ? x_[a] : x_[b], y0 = left ? y_[a] : y_[b];
        return y0 + slope * (t - x0);
    }
    const std::size_t b = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    const std::size_t a = b - 1;
    const double h = x_[b] - x_[a];
    const double u = (x_[b] - t) / h, v = (t - x_[a]) / h;
    return u * y_[a] + v * y_[b] + ((u * u * u - u) * m_[a] + (v * v * v - v) * m_[b]) * h * h / 6.0;
}

RawSeries impute_spline(const RawSeries& s)
{
    if (static_cast<Index>(s.flag.size()) != s.size()) throw std::invalid_argument("impute_spline: flag length mismatch");
    const bool timed = static_cast<Index>(s.time.size()) == s.size();
    auto abscissa = [&](Index i) { return timed ? static_cast<double>(s.time[static_cast<std::size_t>(i)]) : static_cast<double>(i); };
    std::vector<double> x, y;
    for (Index i = 0; i < s.size(); ++i)
        if (s.flag[static_cast<std::size_t>(i)] == Quality::ok) {
            x.push_back(abscissa(i));
            y.push_back(s.value(i));
        }
    if (x.size() < 4) throw std::invalid_argument("impute_spline: fewer than 4 clean points");
    if (static_cast<Index>(x.size()) == s.size()) return s;
    const NaturalSpline spline(std::move(x), std::move(y));
    RawSeries out = s;
    for (Index i = 0; i < s.size(); ++i)
        if (s.flag[static_cast<std::size_t>(i)] != Quality::ok) out.value(i) = spline(abscissa(i));
    return out;
}

// ---------------------------------------------------------------------------
// Transforms

Vector seasonal_difference(const Vector& x, Index s)
{
    if (s < 1) throw std::invalid_argument("seasonal_difference: lag must be positive");
    if (x.size() <= s) throw std::invalid_argument("seasonal_difference: series not longer than the lag");
    return x.tail(x.size() - s) - x.head(x.size() - s);
}

Vector invert_seasonal(const Vector& d, const Vector& prefix)
{
    const Index s = prefix.size();
    if (s < 1) throw std::invalid_argument("invert_seasonal: empty prefix");
    Vector x(s + d.size());
    x.head(s) = prefix;
    for (Index t = 0; t < d.size(); ++t) x(s + t) = d(t) + x(t);
    return x;
}

Vector log_transform(const Vector& x, double offset)
{
    if (x.size() > 0 && !((x.array() + offset).minCoeff() > 0.0))
        throw std::domain_error("log_transform: nonpositive value after offset");
    return (x.array() + offset).log();
}

Vector inverse_log_transform(const Vector& x, double offset)
{
    return x.array().exp() - offset;
}

ZScore ZScore::fit(const Vector& x)
{
    if (x.size() < 2) throw std::invalid_argument("ZScore::fit: need at least 2 samples");
    ZScore z;
    z.mean = x.mean();
    z.sd = std::sqrt((x.array() - z.mean).square().mean());
    if (!(z.sd > 0.0)) throw std::domain_error("ZScore::fit: constant series");
    return z;
}

namespace {

Vector pre_zscore(const Pipeline& p, const Vector& raw)
{
    Vector v = p.log ? log_transform(raw) : raw;
    return p.season > 0 ? seasonal_difference(v, p.season) : v;
}

} // namespace

Vector Pipeline::fit_apply(const Vector& raw, Index fit_end)
{
    if (season < 0) throw std::invalid_argument("Pipeline: negative season");
    const Vector v = log ? log_transform(raw) : raw;
    prefix = v.head(std::min(season, v.size()));
    const Vector d = pre_zscore(*this, raw);
    if (fit_end < 2 || fit_end > d.size()) throw std::invalid_argument("Pipeline: bad fit range");
    z = standardize ? ZScore::fit(d.head(fit_end)) : ZScore{};
    return z.apply(d);
}

Vector Pipeline::apply(const Vector& raw) const
{
    return z.apply(pre_zscore(*this, raw));
}

Vector Pipeline::invert(const Vector& transformed) const
{
    Vector v = z.invert(transformed);
    if (season > 0) v = invert_seasonal(v, prefix);
    return log ? inverse_log_transform(v) : v;
}

double Pipeline::invert_at(double transformed, Index j, const Vector& raw) const
{
    double v = z.invert(transformed);
    if (season > 0) {
        if (j - season < 0 || j - season >= raw.size()) throw std::out_of_range("Pipeline::invert_at: index outside the raw series");
        const double base = raw(j - season);
        v += log ? std::log(base + 1.0) : base;
    }
    return log ? std::exp(v) - 1.0 : v;
}

Vector autocorrelation(const Vector& x, Index max_lag)
{
    if (max_lag < 0 || x.size() <= max_lag) throw std::invalid_argument("autocorrelation: series not longer than max_lag");
    const Vector c = x.array() - x.mean();
    const double var = c.squaredNorm();
    if (!(var > 0.0)) throw std::domain_error("autocorrelation: constant series");
    Vector r(max_lag + 1);
    const Index n = x.size();
    for (Index k = 0; k <= max_lag; ++k) r(k) = c.head(n - k).dot(c.tail(n - k)) / var;
    return r;
}

// ---------------------------------------------------------------------------
// Splits and tasks

Splits split_fractions(Index n, double train, double valid)
{
    if (!(train > 0.0 && valid > 0.0 && train + valid < 1.0)) throw std::invalid_argument("split_fractions: empty part");
    Splits s;
    s.size = n;
    // The tiny bias keeps products like 0.6 * 15000 from flooring to 8999.
    const Index tr = static_cast<Index>(std::floor(static_cast<double>(n) * train + 1e-9));
    const Index va = static_cast<Index>(std::floor(static_cast<double>(n) * valid + 1e-9));
    s.train_end = tr;
    s.valid_end = tr + va;
    if (s.train() <= 0 || s.valid() <= 0 || s.test() <= 0) throw std::invalid_argument("split_fractions: empty part");
    return s;
}

Splits split_months(const std::vector<std::int64_t>& time, int train_months, int valid_months, int test_months)
{
    using namespace std::chrono;
    if (train_months < 1 || valid_months < 1 || test_months < 1) throw std::invalid_argument("split_months: empty part");
    if (time.empty()) throw std::invalid_argument("split_months: empty series");
    const std::int64_t d0 = time.front() >= 0 ? time.front() / 86400 : -((-time.front() + 86399) / 86400);
    const year_month_day first{sys_days{days{d0}}};
    const year_month start = first.year() / first.month();
    auto boundary = [&](int m) {
        const year_month ym = start + months{m};
        return static_cast<std::int64_t>(sys_days{ym / 1}.time_since_epoch().count()) * 86400;
    };
    auto index_of = [&](std::int64_t t) { return static_cast<Index>(std::lower_bound(time.begin(), time.end(), t) - time.begin()); };
    Splits s;
    s.train_end = index_of(boundary(train_months));
    s.valid_end = index_of(boundary(train_months + valid_months));
    s.size = index_of(boundary(train_months + valid_months + test_months));
    if (s.train() <= 0 || s.valid() <= 0 || s.test() <= 0) throw std::invalid_argument("split_months: empty part");
    return s;
}

Supervised build_supervised(const Vector& target, const Matrix& exog, Index tf)
{
    if (tf < 1) throw std::invalid_argument("build_supervised: horizon must be >= 1");
    if (tf >= target.size()) throw std::invalid_argument("build_supervised: horizon not shorter than the series");
    if (exog.rows() > 0 && exog.cols() != target.size()) throw std::invalid_argument("build_supervised: exogenous length mismatch");
    const Index n = target.size() - tf;
    Supervised s;
    s.inputs.resize(1 + exog.rows(), n);
    s.inputs.row(0) = target.head(n).transpose();
    if (exog.rows() > 0) s.inputs.bottomRows(exog.rows()) = exog.leftCols(n);
    s.labels = target.tail(n).transpose();
    return s;
}

Vector TaskDataset::to_raw(const RowVector& pred, Index begin) const
{
    Vector out(pred.size());
    for (Index k = 0; k < pred.size(); ++k) out(k) = pipeline.invert_at(pred(k), label_raw_index(begin + k), raw);
    return out;
}

Vector TaskDataset::raw_labels(Index begin, Index n) const
{
    Vector out(n);
    for (Index k = 0; k < n; ++k) out(k) = raw(label_raw_index(begin + k));
    return out;
}

namespace {

/// Shared tail of task assembly. Splits are given in supervised steps.
TaskDataset assemble(std::string name, const Vector& raw, Matrix exog, Pipeline pipe, Index tf, const Splits& splits)
{
    TaskDataset d;
    d.name = std::move(name);
    d.horizon = tf;
    const Index s = pipe.season;
    // The z-score sees every value a training step touches (inputs and labels).
    const Vector target = pipe.fit_apply(raw, splits.train_end + tf);
    if (exog.rows() > 0) {
        exog = exog.rightCols(exog.cols() - s).eval();
        for (Index c = 0; c < exog.rows(); ++c) {
            const ZScore z = ZScore::fit(exog.row(c).head(splits.train_end + tf).transpose());
            exog.row(c) = z.apply(Vector(exog.row(c).transpose())).transpose();
        }
    }
    Supervised sup = build_supervised(target, exog, tf);
    if (sup.inputs.cols() != splits.size) throw std::logic_error("task assembly: split size mismatch");
    d.x = std::move(sup.inputs);
    d.y = std::move(sup.labels);
    d.splits = splits;
    d.pipeline = std::move(pipe);
    d.raw = raw;
    d.raw_offset = s;
    return d;
}

/// Raw-index month boundaries mapped to supervised steps by label index.
Splits month_steps(const std::vector<std::int64_t>& time, int a, int b, int c, Index offset)
{
    const Splits r = split_months(time, a, b, c);
    Splits s;
    s.train_end = r.train_end - offset;
    s.valid_end = r.valid_end - offset;
    s.size = r.size - offset;
    if (s.train() <= 0 || s.valid() <= 0 || s.test() <= 0) throw std::invalid_argument("month split: empty part");
    return s;
}

} // namespace

TaskDataset make_synthetic_task(const std::string& name, Index n, std::uint64_t seed)
{
    if (n < 10) throw std::invalid_argument("make_synthetic_task: series too short");
    Pipeline pipe;
    if (name == "mg") {
        const Index tf = 12;
        return assemble(name, gen_mackey_glass(n + tf), Matrix(), pipe, tf, split_fractions(n, 0.6, 0.2));
    }
    if (name == "mso") {
        const Index tf = 10;
        return assemble(name, gen_mso(n + tf), Matrix(), pipe, tf, split_fractions(n, 0.6, 0.2));
    }
    if (name == "narma") {
        const NarmaSeries s = gen_narma(n + 1, seed);
        return assemble(name, s.y, s.x.transpose(), pipe, 1, split_fractions(n, 0.6, 0.2));
    }
    throw std::invalid_argument("unknown synthetic task '" + name + "'");
}

TaskDataset make_real_task(const std::string& preset, const RawSeries& series)
{
    if (preset == "orange") {
        const RawSeries clean = impute_adjacent_weeks(series, 168);
        Pipeline pipe;
        pipe.log = true;
        pipe.season = 24;
        const Index tf = 24;
        const Index steps = clean.size() - pipe.season - tf;
        TaskDataset d = assemble(preset, clean.value, Matrix(), pipe, tf, split_fractions(steps, 0.7, 0.15));
        d.time = clean.time;
        return d;
    }
    if (preset == "acea" || preset == "gefcom") {
        const bool acea = preset == "acea";
        const RawSeries clean = series.count(Quality::ok) == series.size() ? series : impute_spline(series);
        Pipeline pipe;
        pipe.season = acea ? 144 : 24;
        const Index tf = pipe.season;
        const Index offset = pipe.season + tf; // raw index of step 0's label
        const Splits sp = month_steps(clean.time, acea ? 3 : 10, 1, 1, offset);
        // Anything past the test months is dropped.
        const Index raw_len = sp.size + offset;
        const Vector raw = clean.value.head(raw_len);
        const Matrix exog = acea ? Matrix() : Matrix(clean.exog.leftCols(raw_len));
        TaskDataset d = assemble(preset, raw, exog, pipe, tf, sp);
        d.time.assign(clean.time.begin(), clean.time.begin() + raw_len);
        return d;
    }
    throw std::invalid_argument("unknown dataset preset '" + preset + "'");
}

RawSeries surrogate_series(const std::string& preset, Index n, std::uint64_t seed)
{
    RngStream rng{seed};
    RawSeries s;
    s.value.resize(n);
    s.flag.assign(static_cast<std::size_t>(n), Quality::ok);
    const double pi = std::acos(-1.0);
    // 2011-01-01 for every surrogate; month splits start on a boundary.
    const std::int64_t t0 = parse_iso8601("2011-01-01T00:00:00");
    if (preset == "orange") {
        double ar = 0.0;
        for (Index t = 0; t < n; ++t) {
            s.time.push_back(t0 + 3600 * t);
            const double hour = static_cast<double>(t % 24), dow = static_cast<double>((t / 24) % 7);
            ar = 0.7 * ar + rng.normal(0.0, 0.15);
            const double level = 3.0 + 1.5 * std::sin(2.0 * pi * (hour - 6.0) / 24.0) - (dow >= 5 ? 0.8 : 0.0) + ar;
            s.value(t) = std::max(0.0, std::round(std::exp(level)));
            if (t > 400 && rng.bernoulli(0.003)) {
                s.value(t) = -1.0;
                s.flag[static_cast<std::size_t>(t)] = Quality::corrupted;
            }
        }
        return s;
    }
    if (preset == "acea") {
        double ar = 0.0;
        for (Index t = 0; t < n; ++t) {
            s.time.push_back(t0 + 600 * t);
            const double slot = static_cast<double>(t % 144);
            ar = 0.95 * ar + rng.normal(0.0, 0.05);
            s.value(t) = 10.0 + 3.0 * std::sin(2.0 * pi * slot / 144.0) + std::sin(4.0 * pi * slot / 144.0) + ar;
            if (t > 10 && t + 10 < n && rng.bernoulli(0.002)) s.flag[static_cast<std::size_t>(t)] = Quality::corrupted;
        }
        return s;
    }
    if (preset == "gefcom") {
        s.exog.resize(1, n);
        s.exog_names = {"temperature"};
        double ar = 0.0, tar = 0.0;
        for (Index t = 0; t < n; ++t) {
            s.time.push_back(t0 + 3600 * t);
            const double hour = static_cast<double>(t % 24), day = static_cast<double>(t) / 24.0;
            tar = 0.9 * tar + rng.normal(0.0, 1.0);
            const double temp = 55.0 - 20.0 * std::cos(2.0 * pi * day / 365.0) + 8.0 * std::sin(2.0 * pi * (hour - 9.0) / 24.0) + tar;
            ar = 0.8 * ar + rng.normal(0.0, 40.0);
            s.exog(0, t) = temp;
            s.value(t) = 1500.0 + 300.0 * std::sin(2.0 * pi * (hour - 7.0) / 24.0) + 0.4 * (temp - 60.0) * (temp - 60.0) + ar;
        }
        return s;
    }
    throw std::invalid_argument("unknown dataset preset '" + preset + "'");
}

} // namespace rnnfc
