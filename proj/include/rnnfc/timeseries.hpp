#pragma once

// Synthetic benchmark generators, CSV ingestion with quality flags,
// imputation, an invertible log / seasonal-difference / z-score pipeline,
// autocorrelation, splits and supervised task assembly.

#include "rnnfc/numerics.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rnnfc {

// ---------------------------------------------------------------------------
// Generators

struct MackeyGlassParams {
    double tau = 17.0;
    double alpha = 0.2;
    double beta = 0.1;
    double x0 = 1.2;
    double dt = 0.1;
    int stride = 10; // integration steps per emitted sample
};

/// dx/dt = alpha x(t - tau) / (1 + x(t - tau)^10) - beta x(t).
double mackey_glass_derivative(double x, double x_delayed, const MackeyGlassParams& p = {});

/// RK4 with constant history x0 for t <= 0; the delayed value at substeps is
/// linearly interpolated in the history buffer. Sample k is x(k * stride * dt).
Vector gen_mackey_glass(Index n, const MackeyGlassParams& p = {});

struct NarmaSeries {
    Vector x; // input, uniform on [0, input_high)
    Vector y; // output, y(0) = 0
    std::uint64_t seed_used = 0;
};

/// y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i=0}^{r} y(t-i) + 1.5 x(t-r) x(t) + 0.1
/// with zero history. Values of index < 0 are zero.
Vector narma_response(const Vector& x, int r = 10);

/// Random input from RngStream{seed}; a trajectory with |y| > 1e3 is
/// discarded and regenerated with seed + 1, + 2, ...
/// With inputs on [0, 1] the order-10 recursion has no bounded regime, so the
/// default input range is [0, 0.5).
NarmaSeries gen_narma(Index n, std::uint64_t seed, int r = 10, double input_high = 0.5);

/// y(t) = sin(0.2 t) + sin(0.311 t) + sin(0.42 t) + sin(0.51 t), t = 0, 1, ...
Vector gen_mso(Index n);

// ---------------------------------------------------------------------------
// Raw series and ingestion

enum class Quality : std::uint8_t { ok, missing, corrupted };

struct RawSeries {
    std::vector<std::int64_t> time; // seconds since 1970-01-01 UTC
    Vector value;
    std::vector<Quality> flag;
    Matrix exog; // channels x T
    std::vector<std::string> exog_names;

    Index size() const { return value.size(); }
    Index count(Quality q) const;
};

struct CsvSchema {
    std::string time_column = "timestamp";
    std::string value_column = "value";
    std::vector<std::string> exog_columns;
    std::int64_t step_seconds = 0;            // > 0: fill absent grid rows with 0 flagged missing
    std::optional<double> corrupted_marker;   // e.g. -1
};

/// ISO-8601 "YYYY-MM-DD[THH:MM[:SS]][Z]" (space also accepted as separator).
std::int64_t parse_iso8601(const std::string& s);
std::string format_iso8601(std::int64_t t);

/// Lines starting with '#' are comments. Throws std::runtime_error with the
/// offending line number.
RawSeries parse_csv(std::istream& in, const CsvSchema& schema);
RawSeries load_csv(const std::string& path, const CsvSchema& schema);
void write_csv(std::ostream& out, const RawSeries& s, const std::string& value_column = "value");

/// Corrupted value <- mean of the same slot one period before and after
/// (single neighbour at the edges). Missing values are left as zero.
/// When neither neighbour is usable the series mean of ok values is used and
/// `fallbacks` (if given) counts such cases.
RawSeries impute_adjacent_weeks(const RawSeries& s, Index period, Index* fallbacks = nullptr);

/// Natural cubic spline through the ok samples (abscissa = time); corrupted
/// and missing samples take the spline value.
RawSeries impute_spline(const RawSeries& s);

/// Natural cubic spline evaluation helper.
class NaturalSpline {
public:
    NaturalSpline(std::vector<double> x, std::vector<double> y);
    double operator()(double t) const;

private:
    std::vector<double> x_, y_, m_; // m_ = second derivatives at the knots
};

// ---------------------------------------------------------------------------
// Transforms

/// d[t] = x[t] - x[t - s], length T - s.
Vector seasonal_difference(const Vector& x, Index s);
/// Rebuild x from the s-sample prefix and the differences.
Vector invert_seasonal(const Vector& d, const Vector& prefix);

Vector log_transform(const Vector& x, double offset = 1.0);
Vector inverse_log_transform(const Vector& x, double offset = 1.0);

struct ZScore {
    double mean = 0.0;
    double sd = 1.0;

    static ZScore fit(const Vector& x);
    Vector apply(const Vector& x) const { return (x.array() - mean) / sd; }
    Vector invert(const Vector& z) const { return z.array() * sd + mean; }
    double apply(double v) const { return (v - mean) / sd; }
    double invert(double v) const { return v * sd + mean; }
};

/// log(x + 1) -> seasonal difference at lag s -> z-score, any step optional.
/// The z-score is fitted on the first `fit_end` transformed samples.
struct Pipeline {
    bool log = false;
    Index season = 0;
    bool standardize = true;
    ZScore z;
    Vector prefix; // first `season` values after the log step

    Vector fit_apply(const Vector& raw, Index fit_end);
    Vector apply(const Vector& raw) const;
    Vector invert(const Vector& transformed) const;
    /// Raw-scale value at raw index j given a transformed-scale value for it
    /// and the raw series, reading raw[j - season] for the seasonal step.
    double invert_at(double transformed, Index j, const Vector& raw) const;
    /// Number of leading raw samples consumed by the transform.
    Index offset() const { return season; }
};

/// Biased sample autocorrelation r(0..max_lag), r(0) = 1. Throws
/// std::domain_error for a constant series.
Vector autocorrelation(const Vector& x, Index max_lag);

// ---------------------------------------------------------------------------
// Splits and tasks

/// Contiguous [0, train_end), [train_end, valid_end), [valid_end, size).
struct Splits {
    Index train_end = 0;
    Index valid_end = 0;
    Index size = 0;

    Index train() const { return train_end; }
    Index valid() const { return valid_end - train_end; }
    Index test() const { return size - valid_end; }
};

/// Floor for train and validation, remainder to test. Empty parts are rejected.
Splits split_fractions(Index n, double train, double valid);
/// Calendar-month boundaries counted from the month of time[0]. The test part
/// holds the following `test_months` (or what remains of the series).
Splits split_months(const std::vector<std::int64_t>& time, int train_months, int valid_months, int test_months);

/// Inputs at t: [target[t], exog[:, t]]; labels target[t + tf]; T - tf samples.
struct Supervised {
    Matrix inputs; // (1 + channels) x (T - tf)
    Matrix labels; // 1 x (T - tf)
};
Supervised build_supervised(const Vector& target, const Matrix& exog, Index tf);

/// Model-ready data for one forecasting task plus what is needed to score
/// predictions on the raw scale.
struct TaskDataset {
    std::string name;
    Index horizon = 1;
    Matrix x;       // inputs, one column per supervised step
    Matrix y;       // labels, 1 x N
    Splits splits;  // over supervised steps
    Pipeline pipeline;
    Vector raw;     // raw target series
    Index raw_offset = 0; // raw index of supervised step 0's input
    std::vector<std::int64_t> time; // raw timestamps, may be empty

    Index size() const { return x.cols(); }
    Matrix x_part(Index begin, Index end) const { return x.middleCols(begin, end - begin); }
    Matrix y_part(Index begin, Index end) const { return y.middleCols(begin, end - begin); }
    /// Raw index of the label of supervised step i.
    Index label_raw_index(Index i) const { return raw_offset + i + horizon; }
    /// Map transformed-scale predictions of steps [begin, begin + n) to the raw scale.
    Vector to_raw(const RowVector& pred, Index begin) const;
    /// Raw-scale truth for the labels of steps [begin, begin + n).
    Vector raw_labels(Index begin, Index n) const;
};

/// Synthetic tasks: "mg" (tf 12), "narma" (tf 1), "mso" (tf 10); z-score
/// fitted on the training part; 60/20/20 split.
TaskDataset make_synthetic_task(const std::string& name, Index n, std::uint64_t seed);

/// Real-data presets: "orange" (log, lag 24, 70/15/15, tf 24), "acea"
/// (spline imputation, lag 144, months 3/1/1, tf 144), "gefcom" (lag 24,
/// temperature exogenous, months 10/1/1, tf 24). Imputation for "orange"
/// uses adjacent weeks (168 samples).
TaskDataset make_real_task(const std::string& preset, const RawSeries& series);

/// Hourly / 10-minute surrogate series with the shape of the real datasets
/// (daily and weekly cycles, noise, corrupted markers) for tests and demos.
RawSeries surrogate_series(const std::string& preset, Index n, std::uint64_t seed);

} // namespace rnnfc
