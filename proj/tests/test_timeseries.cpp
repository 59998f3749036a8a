#include "rnnfc/timeseries.hpp"

#include <doctest.h>

#include <sstream>

using namespace rnnfc;

namespace {

Vector vec(std::initializer_list<double> v)
{
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double e : v) out(i++) = e;
    return out;
}

RawSeries plain(const Vector& v)
{
    RawSeries s;
    s.value = v;
    s.flag.assign(static_cast<std::size_t>(v.size()), Quality::ok);
    return s;
}

} // namespace

TEST_CASE("mackey-glass derivative and integration")
{
    CHECK(std::abs(mackey_glass_derivative(1.2, 1.2) - (-0.08662837)) < 1e-6);
    // Hand value: 1.2^10 = 6.1917364224.
    CHECK(std::abs(mackey_glass_derivative(1.2, 1.2) - (0.24 / 7.1917364224 - 0.12)) < 1e-15);

    MackeyGlassParams p;
    p.alpha = 0.0;
    const Vector decay = gen_mackey_glass(200, p);
    for (Index k = 0; k < 200; ++k) CHECK(std::abs(decay(k) - 1.2 * std::exp(-0.1 * static_cast<double>(k))) < 1e-8);

    const Vector a = gen_mackey_glass(3000), b = gen_mackey_glass(3000);
    CHECK(a == b);
    CHECK(a(0) == 1.2);
    // The attractor stays within its usual band once transients decay.
    CHECK(a.tail(2000).minCoeff() > 0.2);
    CHECK(a.tail(2000).maxCoeff() < 1.5);
    CHECK_THROWS_AS(gen_mackey_glass(0), std::invalid_argument);
}

TEST_CASE("narma recursion")
{
    const Vector y = narma_response(Vector::Zero(5));
    CHECK(y(0) == 0.0);
    CHECK(std::abs(y(1) - 0.1) < 1e-15);
    CHECK(std::abs(y(2) - 0.1305) < 1e-15);

    // Hand check of the input product and the windowed sum with order 1.
    const Vector x = vec({0.5, 0.4, 0.2});
    const Vector z = narma_response(x, 1);
    CHECK(std::abs(z(1) - 0.1) < 1e-15);
    const double z2 = 0.3 * 0.1 + 0.05 * 0.1 * 0.1 + 1.5 * 0.5 * 0.4 + 0.1;
    CHECK(std::abs(z(2) - z2) < 1e-15);

    const NarmaSeries s = gen_narma(2000, 5);
    CHECK(s.x.minCoeff() >= 0.0);
    CHECK(s.x.maxCoeff() < 0.5);
    // The full unit range has no bounded trajectory; the guard gives up.
    CHECK_THROWS_AS(gen_narma(2000, 5, 10, 1.0), std::runtime_error);
    CHECK((narma_response(s.x) - s.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(gen_narma(2000, 5).y == s.y);
    CHECK(s.y.cwiseAbs().maxCoeff() <= 1e3);
    CHECK_THROWS_AS(gen_narma(10, 1), std::invalid_argument);
}

TEST_CASE("mso values")
{
    const Vector y = gen_mso(100);
    CHECK(y(0) == 0.0);
    CHECK(std::abs(y(1) - 1.40061785) < 1e-6);
    CHECK(std::abs(y(7) - (std::sin(1.4) + std::sin(2.177) + std::sin(2.94) + std::sin(3.57))) < 1e-14);
}

TEST_CASE("iso timestamps")
{
    CHECK(parse_iso8601("1970-01-01") == 0);
    CHECK(parse_iso8601("1970-01-02T01:00") == 86400 + 3600);
    CHECK(parse_iso8601("2000-03-01 00:00:05Z") - parse_iso8601("2000-02-28T00:00:00") == 2 * 86400 + 5);
    CHECK(format_iso8601(parse_iso8601("2012-07-09T13:45:59")) == "2012-07-09T13:45:59");
    CHECK_THROWS(parse_iso8601("2011-02-30"));
    CHECK_THROWS(parse_iso8601("2011-01-01T25:00"));
    CHECK_THROWS(parse_iso8601("yesterday"));
}

TEST_CASE("csv ingestion")
{
    CsvSchema schema;
    schema.step_seconds = 3600;
    schema.corrupted_marker = -1.0;
    {
        std::istringstream in("timestamp,value\n2011-01-01T00:00,5\n2011-01-01T01:00,6\n2011-01-01T02:00,7\n");
        const RawSeries s = parse_csv(in, schema);
        CHECK(s.size() == 3);
        CHECK(s.value(2) == 7.0);
        CHECK(s.count(Quality::ok) == 3);
    }
    {
        std::istringstream in("timestamp,value\n2011-01-01T00:00,5\n2011-01-01T01:00,-1\n2011-01-01T04:00,7\n");
        const RawSeries s = parse_csv(in, schema);
        REQUIRE(s.size() == 5);
        CHECK(s.flag[1] == Quality::corrupted);
        CHECK(s.flag[2] == Quality::missing);
        CHECK(s.flag[3] == Quality::missing);
        CHECK(s.value(2) == 0.0);
        CHECK(s.time[3] == parse_iso8601("2011-01-01T03:00"));
    }
    auto error_of = [&](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_csv(in, schema);
        } catch (const std::runtime_error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(error_of("timestamp,value\n2011-01-01T00:00,5\n2011-01-01T01:00,5,3\n").find("line 3") != std::string::npos);
    CHECK(error_of("timestamp,value\n2011-01-01T00:00,abc\n").find("line 2") != std::string::npos);
    CHECK(error_of("timestamp,value\n2011-01-01T01:00,1\n2011-01-01T00:00,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("timestamp,value\n2011-01-01T01:00,1\n2011-01-01T01:30,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("time,value\n").find("missing column") != std::string::npos);
}

TEST_CASE("csv round trip with exogenous columns")
{
    const RawSeries s = surrogate_series("gefcom", 50, 3);
    std::ostringstream out;
    write_csv(out, s, "load");
    CsvSchema schema;
    schema.value_column = "load";
    schema.exog_columns = {"temperature"};
    std::istringstream in(out.str());
    const RawSeries r = parse_csv(in, schema);
    CHECK(r.value == s.value);
    CHECK(r.exog == s.exog);
    CHECK(r.time == s.time);
}

TEST_CASE("adjacent-week imputation")
{
    RawSeries s = plain(Vector::Zero(21));
    s.value(2) = 4;
    s.value(16) = 6;
    s.flag[9] = Quality::corrupted;
    s.value(9) = -1;
    CHECK(impute_adjacent_weeks(s, 7).value(9) == 5.0);

    RawSeries edge = plain(Vector::Zero(21));
    edge.value(10) = 8;
    edge.flag[3] = Quality::corrupted;
    CHECK(impute_adjacent_weeks(edge, 7).value(3) == 8.0);

    RawSeries clean = plain(vec({1, 2, 3, 4, 5, 6, 7, 8}));
    CHECK(impute_adjacent_weeks(clean, 2).value == clean.value);

    RawSeries both = plain(vec({2, 4, 6, 8, 10, 12}));
    both.flag[0] = both.flag[2] = both.flag[4] = Quality::corrupted;
    Index fb = 0;
    const RawSeries r = impute_adjacent_weeks(both, 2, &fb);
    CHECK(fb == 3);
    CHECK(r.value(2) == doctest::Approx((4.0 + 8.0 + 12.0) / 3.0));
}

TEST_CASE("natural spline imputation")
{
    // A cubic sampled densely; the interior point is recovered up to
    // boundary effects that decay geometrically away from the ends.
    const Index n = 200;
    RawSeries s = plain(Vector::Zero(n));
    auto f = [](double t) { return 1e-6 * t * t * t - 2e-4 * t * t + 0.01 * t + 3.0; };
    for (Index i = 0; i < n; ++i) s.value(i) = f(static_cast<double>(i));
    s.flag[100] = Quality::corrupted;
    s.value(100) = -1;
    CHECK(std::abs(impute_spline(s).value(100) - f(100.0)) < 1e-6);

    // Locally linear data with equal neighbours: spline agrees with linear interpolation.
    RawSeries flat = plain(vec({0, 1, 2, 3, 3, 3, 3, 3, 4, 5, 6}));
    flat.flag[5] = Quality::corrupted;
    flat.value(5) = 100;
    CHECK(std::abs(impute_spline(flat).value(5) - 3.0) < 0.05);

    RawSeries clean = plain(vec({1, 5, 2, 8, 3}));
    CHECK(impute_spline(clean).value == clean.value);

    RawSeries few = plain(vec({1, 2, 3, 4, 5}));
    few.flag[0] = few.flag[1] = Quality::corrupted;
    CHECK_THROWS_AS(impute_spline(few), std::invalid_argument);

    // Interpolating: knots are reproduced.
    const NaturalSpline sp({0, 1, 3, 4}, {1, -1, 2, 0});
    CHECK(sp(1.0) == doctest::Approx(-1.0));
    CHECK(sp(3.0) == doctest::Approx(2.0));
}

TEST_CASE("seasonal differencing and inversion")
{
    const Vector x = vec({1, 2, 3, 4, 5, 6});
    const Vector d = seasonal_difference(x, 2);
    CHECK(d == vec({2, 2, 2, 2}));
    CHECK(invert_seasonal(d, x.head(2)) == x);

    Vector periodic(48);
    for (Index t = 0; t < 48; ++t) periodic(t) = std::sin(static_cast<double>(t % 12));
    CHECK(seasonal_difference(periodic, 12).isZero(0.0));
    CHECK_THROWS_AS(seasonal_difference(x, 6), std::invalid_argument);
}

TEST_CASE("log and zscore")
{
    const Vector x = vec({0, 1, 5, 100});
    CHECK((inverse_log_transform(log_transform(x)) - x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(log_transform(vec({-1, 2})), std::domain_error);

    RngStream rng{1};
    const Vector v = random_uniform(500, 1, 3.0, 9.0, rng);
    const ZScore z = ZScore::fit(v);
    const Vector s = z.apply(v);
    CHECK(std::abs(s.mean()) < 1e-12);
    CHECK(std::abs(std::sqrt(s.array().square().mean()) - 1.0) < 1e-12);
    CHECK_THROWS_AS(ZScore::fit(Vector::Constant(5, 2.0)), std::domain_error);
}

TEST_CASE("pipeline round trip and no leakage")
{
    const RawSeries raw = impute_adjacent_weeks(surrogate_series("orange", 1000, 4), 168);
    Pipeline p;
    p.log = true;
    p.season = 24;
    const Vector t = p.fit_apply(raw.value, 600);
    CHECK((p.invert(t) - raw.value).cwiseAbs().maxCoeff() < 1e-12 * raw.value.cwiseAbs().maxCoeff());
    for (Index j = 24; j < raw.size(); j += 37) CHECK(std::abs(p.invert_at(t(j - 24), j, raw.value) - raw.value(j)) < 1e-9);

    Vector changed = raw.value;
    changed.tail(200).array() += 1000.0;
    Pipeline q = p;
    q.fit_apply(changed, 600);
    CHECK(q.z.mean == p.z.mean);
    CHECK(q.z.sd == p.z.sd);
}

TEST_CASE("autocorrelation")
{
    Vector s(2000);
    for (Index t = 0; t < 2000; ++t) s(t) = std::sin(2.0 * std::acos(-1.0) * static_cast<double>(t) / 25.0);
    const Vector r = autocorrelation(s, 40);
    CHECK(r(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r(25) > r(24));
    CHECK(r(25) > r(26));

    RngStream rng{2};
    Vector w(10000);
    for (Index t = 0; t < w.size(); ++t) w(t) = rng.normal(0.0, 1.0);
    const Vector rw = autocorrelation(w, 20);
    CHECK(rw.tail(20).cwiseAbs().maxCoeff() < 0.05);

    // Direct formula on a tiny series.
    const Vector x = vec({1, 3, 2, 5});
    const double m = 2.75;
    const double var = (1 - m) * (1 - m) + (3 - m) * (3 - m) + (2 - m) * (2 - m) + (5 - m) * (5 - m);
    CHECK(autocorrelation(x, 1)(1) == doctest::Approx(((1 - m) * (3 - m) + (3 - m) * (2 - m) + (2 - m) * (5 - m)) / var));
    CHECK_THROWS_AS(autocorrelation(Vector::Constant(10, 1.0), 2), std::domain_error);
}

TEST_CASE("splits")
{
    const Splits a = split_fractions(15000, 0.6, 0.2);
    CHECK(a.train() == 9000);
    CHECK(a.valid() == 3000);
    CHECK(a.test() == 3000);
    const Splits b = split_fractions(3336, 0.7, 0.15);
    CHECK(b.train() == 2335);
    CHECK(b.valid() == 500);
    CHECK(b.test() == 501);
    CHECK_THROWS_AS(split_fractions(100, 1.0, 0.0), std::invalid_argument);

    std::vector<std::int64_t> time;
    for (Index h = 0; h < 24 * 160; ++h) time.push_back(parse_iso8601("2011-01-01T00:00") + 3600 * h);
    const Splits m = split_months(time, 3, 1, 1);
    CHECK(m.train() == 24 * (31 + 28 + 31));
    CHECK(m.valid() == 24 * 30);
    CHECK(m.test() == 24 * 31);
    CHECK_THROWS_AS(split_months(time, 5, 1, 1), std::invalid_argument);
}

TEST_CASE("supervised framing")
{
    const Supervised s = build_supervised(vec({1, 2, 3}), Matrix(), 1);
    CHECK(s.inputs.cols() == 2);
    CHECK(s.inputs(0, 0) == 1);
    CHECK(s.labels(0, 0) == 2);
    CHECK(s.inputs(0, 1) == 2);
    CHECK(s.labels(0, 1) == 3);

    Vector target(100);
    for (Index t = 0; t < 100; ++t) target(t) = static_cast<double>(t);
    Matrix exog = target.transpose() * 2.0;
    const Supervised g = build_supervised(target, exog, 24);
    CHECK(g.inputs.rows() == 2);
    CHECK(g.labels(0, 10) - g.inputs(0, 10) == 24);
    CHECK(g.inputs(1, 10) == 20);
    CHECK_THROWS_AS(build_supervised(vec({1, 2}), Matrix(), 2), std::invalid_argument);
}

TEST_CASE("synthetic tasks")
{
    const TaskDataset mg = make_synthetic_task("mg", 1500, 1);
    CHECK(mg.size() == 1500);
    CHECK(mg.splits.train() == 900);
    CHECK(mg.horizon == 12);
    // Label at step i is the input 12 steps later.
    CHECK(mg.y(0, 100) == mg.x(0, 112));
    const Matrix tr = mg.x.leftCols(900);
    CHECK(std::abs(tr.row(0).mean()) < 0.05);

    const TaskDataset narma = make_synthetic_task("narma", 500, 3);
    CHECK(narma.x.rows() == 2);
    CHECK(narma.y(0, 5) == narma.x(0, 6));

    const TaskDataset mso = make_synthetic_task("mso", 500, 0);
    CHECK((mso.to_raw(mso.y.row(0), 0) - mso.raw_labels(0, 500)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(make_synthetic_task("nope", 500, 0), std::invalid_argument);
}

TEST_CASE("real-data presets invert labels to the raw series")
{
    for (const auto& [preset, n] : {std::pair<std::string, Index>{"orange", 3336}, {"acea", 144 * 160}, {"gefcom", 24 * 370}}) {
        const RawSeries raw = surrogate_series(preset, n, 7);
        const TaskDataset d = make_real_task(preset, raw);
        CAPTURE(preset);
        CHECK(d.splits.train() > 0);
        CHECK(d.splits.test() > 0);
        CHECK(d.size() == d.splits.size);
        const Vector back = d.to_raw(d.y.row(0), 0);
        const Vector truth = d.raw_labels(0, d.size());
        CHECK((back - truth).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + truth.cwiseAbs().maxCoeff()));
        // Standardized on the training part.
        CHECK(std::abs(d.x.row(0).head(d.splits.train()).mean()) < 0.05);
    }
    const TaskDataset g = make_real_task("gefcom", surrogate_series("gefcom", 24 * 370, 1));
    CHECK(g.x.rows() == 2);
    const TaskDataset o = make_real_task("orange", surrogate_series("orange", 3336, 1));
    CHECK(o.splits.train() == 2301); // floor(0.7 * (3336 - 48))
}
