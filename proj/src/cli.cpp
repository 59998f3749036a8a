#include "rnnfc/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace rnnfc {

namespace {

const char* const synthetic_tasks[] = {"mg", "narma", "mso"};
const char* const real_presets[] = {"orange", "acea", "gefcom"};

bool is_synthetic(const std::string& t)
{
    return std::find(std::begin(synthetic_tasks), std::end(synthetic_tasks), t) != std::end(synthetic_tasks);
}

bool is_real(const std::string& t)
{
    return std::find(std::begin(real_presets), std::end(real_presets), t) != std::end(real_presets);
}

Json protocol_json(const EvalProtocol& p)
{
    return {{"transient", p.transient},
            {"rnn_epochs", p.rnn_epochs},
            {"narx_epochs", p.narx_epochs},
            {"test_epochs", p.test_epochs},
            {"restarts", p.restarts}};
}

template <typename T>
void get_to(const Json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw std::invalid_argument(std::string("experiment: bad value for '") + key + "'");
    }
}

Json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
}

void write_json(const fs::path& path, const Json& j)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
    return out;
}

CsvSchema schema_for(const std::string& preset, const Json& csv)
{
    CsvSchema s;
    if (preset == "orange") {
        s.step_seconds = 3600;
        s.corrupted_marker = -1.0;
    } else if (preset == "acea") {
        s.step_seconds = 600;
    } else if (preset == "gefcom") {
        s.step_seconds = 3600;
        s.exog_columns = {"temperature"};
    }
    get_to(csv, "time_column", s.time_column);
    get_to(csv, "value_column", s.value_column);
    get_to(csv, "exog_columns", s.exog_columns);
    get_to(csv, "step_seconds", s.step_seconds);
    if (csv.contains("corrupted_marker"))
        s.corrupted_marker = csv.at("corrupted_marker").is_null() ? std::nullopt : std::optional<double>(csv.at("corrupted_marker").get<double>());
    return s;
}

/// Synthetic series as a RawSeries on an hourly grid from 2000-01-01.
RawSeries synthetic_series(const std::string& task, Index n, std::uint64_t seed)
{
    RawSeries s;
    if (task == "mg")
        s.value = gen_mackey_glass(n);
    else if (task == "mso")
        s.value = gen_mso(n);
    else {
        const NarmaSeries g = gen_narma(n, seed);
        s.value = g.y;
        s.exog = g.x.transpose();
        s.exog_names = {"input"};
    }
    s.flag.assign(static_cast<std::size_t>(n), Quality::ok);
    const std::int64_t t0 = parse_iso8601("2000-01-01T00:00:00");
    for (Index t = 0; t < n; ++t) s.time.push_back(t0 + 3600 * t);
    return s;
}

void write_predictions(const fs::path& path, const Json& header, const TaskDataset& data, const RunOutcome& r)
{
    std::ofstream out = open_out(path);
    out << "# " << header.dump() << '\n';
    out << "step,timestamp,truth,prediction,residual\n";
    for (Index k = 0; k < r.prediction.size(); ++k) {
        const Index step = r.begin + k;
        const Index j = data.label_raw_index(step);
        out << step << ',' << (static_cast<Index>(data.time.size()) > j ? format_iso8601(data.time[static_cast<std::size_t>(j)]) : "")
            << ',' << r.truth(k) << ',' << r.prediction(k) << ',' << r.truth(k) - r.prediction(k) << '\n';
    }
}

HyperSpace resolve_space(const Json& j)
{
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        if (name.ends_with(".json")) return hyper_space_from_json(read_json(name));
        return preset_space(name);
    }
    if (j.is_object()) return hyper_space_from_json(j);
    throw std::invalid_argument("experiment: 'space' must be a preset name or an object");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const std::string& task, Index n, std::uint64_t seed, const std::string& out, std::ostream& err)
{
    if (n <= 0) throw std::invalid_argument("generate: n must be positive");
    RawSeries s;
    std::string column = "value";
    if (is_synthetic(task))
        s = synthetic_series(task, n, seed);
    else if (is_real(task))
        s = surrogate_series(task, n, seed);
    else
        throw std::invalid_argument("generate: unknown task '" + task + "'");
    const fs::path p{out};
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f = open_out(p);
    f << "# " << Json{{"command", "generate"}, {"task", task}, {"n", n}, {"seed", seed}}.dump() << '\n';
    write_csv(f, s, column);
    if (!f) throw std::runtime_error("write failed: " + out);
    err << "generate: " << n << " rows of " << task << " -> " << out << '\n';
    return exit_ok;
}

int cmd_search(Experiment e, bool resume, std::ostream& err)
{
    if (e.space.is_null()) throw std::invalid_argument("search: experiment has no 'space'");
    const HyperSpace space = resolve_space(e.space);
    const TaskDataset data = load_task(e);
    const fs::path dir{e.out};
    fs::create_directories(dir);
    const fs::path report_path = dir / "report.json";

    std::vector<TrialResult> done;
    if (resume && fs::exists(report_path)) {
        const Json old = read_json(report_path.string());
        if (old.value("master_seed", std::uint64_t{0}) != e.seed || old.value("budget", Index{0}) != e.budget)
            throw std::invalid_argument("search --resume: report was written with a different seed or budget");
        if (old.at("space") != to_json(space)) throw std::invalid_argument("search --resume: report was written for a different space");
        for (const auto& t : old.at("trials")) done.push_back(trial_from_json(t));
        err << "search: resuming with " << done.size() << " recorded trials\n";
    }

    auto report = [&](std::vector<TrialResult> trials, bool complete) {
        Json j{{"experiment", to_json(e)},
               {"space", to_json(space)},
               {"master_seed", e.seed},
               {"budget", e.budget},
               {"complete", complete}};
        Json arr = Json::array();
        for (const auto& t : trials) arr.push_back(to_json(t));
        j["trials"] = arr;
        write_json(report_path, j);
    };

    std::vector<TrialResult> progress = done;
    const auto ranked = run_search(space, data, e.budget, e.workers, e.seed, e.protocol, done, [&](const TrialResult& t) {
        progress.push_back(t);
        err << "trial " << t.index << ": " << to_string(t.status) << " valid_nrmse=" << t.valid_nrmse << " (" << std::fixed
            << std::setprecision(2) << t.seconds << std::defaultfloat << std::setprecision(6) << " s)\n";
        std::sort(progress.begin(), progress.end(), [](const TrialResult& a, const TrialResult& b) { return a.index < b.index; });
        report(progress, false);
    });
    report(ranked, true);

    const TrialResult& best = ranked.front();
    if (best.status != TrialStatus::ok) {
        err << "search: every trial diverged\n";
        return exit_runtime;
    }
    Experiment chosen = e;
    chosen.model = best.config;
    chosen.space = nullptr;
    write_json(dir / "best_config.json", to_json(chosen));
    err << "search: best trial " << best.index << " valid_nrmse=" << best.valid_nrmse << '\n';
    return exit_ok;
}

int cmd_eval(const Experiment& e, std::ostream& err)
{
    if (e.model.is_null()) throw std::invalid_argument("eval: experiment has no 'model'");
    const ModelConfig cfg = model_config_from_json(e.model);
    const TaskDataset data = load_task(e);
    const fs::path dir{e.out};
    fs::create_directories(dir);
    const FinalEval f = final_eval(cfg, data, e.protocol, e.seed);

    Json per = Json::array();
    for (double v : f.test_nrmse) per.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    const Json metrics{{"experiment", to_json(e)},
                       {"master_seed", e.seed},
                       {"test_nrmse", f.best},
                       {"psi", 1.0 - f.best},
                       {"mean_nrmse", f.mean},
                       {"std_nrmse", f.stddev},
                       {"best_restart", f.best_restart},
                       {"restart_nrmse", per}};
    write_json(dir / "metrics.json", metrics);
    write_predictions(dir / "predictions.csv", Json{{"experiment", to_json(e)}, {"master_seed", e.seed}}, data, f.best_run);
    err << "eval: test_nrmse=" << f.best << " mean=" << f.mean << " std=" << f.stddev << '\n';
    return exit_ok;
}

int cmd_train(const Experiment& e, std::ostream& err)
{
    if (e.model.is_null()) throw std::invalid_argument("train: experiment has no 'model'");
    const ModelConfig cfg = model_config_from_json(e.model);
    const TaskDataset data = load_task(e);
    const fs::path dir{e.out};
    fs::create_directories(dir);
    const RunOutcome r = train_and_score(cfg, data, data.splits.train_end, data.splits.train_end, data.splits.valid_end,
                                         e.protocol.transient, e.seed);
    if (r.diverged) {
        err << "train: diverged\n";
        return exit_runtime;
    }
    write_json(dir / "metrics.json",
               Json{{"experiment", to_json(e)}, {"master_seed", e.seed}, {"valid_nrmse", r.nrmse}, {"psi", 1.0 - r.nrmse}});
    write_predictions(dir / "predictions.csv", Json{{"experiment", to_json(e)}, {"master_seed", e.seed}}, data, r);
    err << "train: valid_nrmse=" << r.nrmse << '\n';
    return exit_ok;
}

} // namespace

// ---------------------------------------------------------------------------

Experiment experiment_from_json(const Json& j)
{
    if (!j.is_object()) throw std::invalid_argument("experiment: expected a JSON object");
    Experiment e;
    get_to(j, "task", e.task);
    get_to(j, "n", e.n);
    get_to(j, "data_seed", e.data_seed);
    if (j.contains("csv")) e.csv = j.at("csv");
    if (j.contains("space")) e.space = j.at("space");
    if (j.contains("model")) e.model = j.at("model");
    get_to(j, "budget", e.budget);
    get_to(j, "seed", e.seed);
    get_to(j, "workers", e.workers);
    get_to(j, "out", e.out);
    if (j.contains("protocol")) {
        const Json& p = j.at("protocol");
        get_to(p, "transient", e.protocol.transient);
        get_to(p, "rnn_epochs", e.protocol.rnn_epochs);
        get_to(p, "narx_epochs", e.protocol.narx_epochs);
        get_to(p, "test_epochs", e.protocol.test_epochs);
        get_to(p, "restarts", e.protocol.restarts);
    }
    if (!is_synthetic(e.task) && !is_real(e.task) && e.task != "csv") throw std::invalid_argument("experiment: unknown task '" + e.task + "'");
    if (e.task == "csv" && !e.csv.contains("path")) throw std::invalid_argument("experiment: csv task needs csv.path");
    if (e.n <= 0 || e.budget < 1 || e.workers < 1) throw std::invalid_argument("experiment: n, budget and workers must be positive");
    if (e.protocol.restarts < 1 || e.protocol.transient < 0) throw std::invalid_argument("experiment: bad protocol");
    if (!e.model.is_null()) model_config_from_json(e.model);
    if (!e.space.is_null()) resolve_space(e.space);
    return e;
}

Json to_json(const Experiment& e)
{
    Json j{{"task", e.task},        {"n", e.n},           {"data_seed", e.data_seed}, {"budget", e.budget},
           {"seed", e.seed},        {"workers", e.workers}, {"out", e.out},           {"protocol", protocol_json(e.protocol)}};
    if (e.task == "csv") j["csv"] = e.csv;
    if (!e.space.is_null()) j["space"] = e.space;
    if (!e.model.is_null()) j["model"] = to_json(model_config_from_json(e.model));
    return j;
}

TaskDataset load_task(const Experiment& e)
{
    if (is_synthetic(e.task)) return make_synthetic_task(e.task, e.n, e.data_seed);
    if (is_real(e.task)) return make_real_task(e.task, surrogate_series(e.task, e.n, e.data_seed));
    const std::string preset = e.csv.value("preset", std::string("orange"));
    if (!is_real(preset)) throw std::invalid_argument("experiment: unknown csv preset '" + preset + "'");
    const RawSeries raw = load_csv(e.csv.at("path").get<std::string>(), schema_for(preset, e.csv));
    return make_real_task(preset, raw);
}

int run_cli(const std::vector<std::string>& args, std::ostream& err)
{
    CLI::App app{"Recurrent network forecasting experiments", "rnnfc"};
    app.require_subcommand(1);

    std::string task = "mg", out_path;
    Index n = 15000;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("generate", "Write a synthetic or surrogate series as CSV");
    gen->add_option("--task", task, "mg | narma | mso | orange | acea | gefcom")->required();
    gen->add_option("--n", n, "Number of samples");
    gen->add_option("--seed", gen_seed, "Seed (NARMA inputs, surrogates)");
    gen->add_option("--out", out_path, "Output CSV path")->required();

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<Index> budget;
    std::optional<std::string> out_dir;
    bool resume = false;
    std::vector<CLI::App*> runs;
    for (const char* name : {"search", "eval", "train"}) {
        auto* sub = app.add_subcommand(name, std::string(name) + " from an experiment JSON");
        sub->add_option("--config", config, "Experiment JSON")->required();
        sub->add_option("--seed", seed, "Master seed");
        sub->add_option("--workers", workers, "Worker threads");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--budget", budget, "Number of search trials");
        if (std::string(name) == "search") sub->add_flag("--resume", resume, "Continue from an existing report");
        runs.push_back(sub);
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        err << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return exit_config;
    }

    try {
        if (gen->parsed()) return cmd_generate(task, n, gen_seed, out_path, err);
        Experiment e = experiment_from_json(read_json(config));
        if (seed) e.seed = *seed;
        if (workers) e.workers = *workers;
        if (budget) e.budget = *budget;
        if (out_dir) e.out = *out_dir;
        if (e.workers < 1 || e.budget < 1) throw std::invalid_argument("workers and budget must be positive");
        if (runs[0]->parsed()) return cmd_search(e, resume, err);
        if (runs[1]->parsed()) return cmd_eval(e, err);
        return cmd_train(e, err);
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

} // namespace rnnfc
