#pragma once

// Metrics, the train/score protocol shared by every architecture, random
// hyperparameter search over declared spaces and the restart-based test run.

#include "rnnfc/bptt.hpp"
#include "rnnfc/esn.hpp"
#include "rnnfc/narx.hpp"
#include "rnnfc/timeseries.hpp"

#include <json.hpp>

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rnnfc {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

/// sqrt(mean_t |Y[t] - Y*[t]|^2 / mean_t |Y*[t] - mean(Y*)|^2), channels in rows.
/// std::invalid_argument for shape problems, std::domain_error for a constant truth.
double nrmse(const Matrix& y, const Matrix& ystar);
inline double nrmse(const Vector& y, const Vector& ystar) { return nrmse(Matrix(y.transpose()), Matrix(ystar.transpose())); }
/// 1 - nrmse.
double accuracy_psi(const Matrix& y, const Matrix& ystar);

// ---------------------------------------------------------------------------
// Model configuration

enum class Arch { ernn, lstm, gru, narx, esn };
std::string_view to_string(Arch a);
Arch arch_from_string(std::string_view s);

/// One architecture tag plus the settings that architecture reads. The JSON
/// form is flat; see to_json for the keys.
struct ModelConfig {
    Arch arch = Arch::esn;
    TrainConfig rnn;
    NarxConfig narx;
    EsnConfig esn;

    void validate() const;
};

Json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; "tdl" sets both NARX lag counts.
ModelConfig model_config_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Train and score

struct EvalProtocol {
    Index transient = 50;   // outputs discarded at the start of every scored segment
    int rnn_epochs = 400;   // gradient RNNs during search
    int narx_epochs = 1000; // LM iterations during search
    int test_epochs = 2000; // gradient RNNs and NARX in final_eval
    int restarts = 10;
};

struct RunOutcome {
    bool diverged = false;
    double nrmse = std::numeric_limits<double>::infinity();
    Index begin = 0;     // first scored supervised step
    Vector prediction;   // raw scale, scored steps only
    Vector truth;        // raw scale
};

/// Train on steps [0, train_end) and predict [eval_begin, eval_end) from a
/// fresh state; the first `transient` predictions are discarded and the rest
/// are scored on the raw scale. Epoch counts come from the config.
RunOutcome train_and_score(const ModelConfig& cfg, const TaskDataset& data, Index train_end, Index eval_begin, Index eval_end,
                           Index transient, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Search spaces

/// One searched key. Kinds: "uniform" on [lo, hi]; "log10" gives 10^c with c
/// uniform on [lo, hi]; "int" uniform on {lo, lo + step, ..., hi}; "choice"
/// picks one of `values`; "scale" copies key `of` times `factor`.
/// `when` = {key, value} restricts the entry to configs where that key
/// already holds that value.
struct Dist {
    std::string key;
    std::string kind;
    double lo = 0.0, hi = 0.0, step = 1.0;
    std::vector<Json> values;
    std::string of;
    double factor = 1.0;
    std::optional<std::pair<std::string, Json>> when;
};

struct HyperSpace {
    Arch arch = Arch::esn;
    Json base = Json::object(); // fixed keys
    std::vector<Dist> params;   // sampled in order
    /// Force l2 > 0 when p_drop > 0, redrawing l2 from (0, l2_max].
    bool l2_with_dropout = false;
};

Json to_json(const HyperSpace& s);
HyperSpace hyper_space_from_json(const Json& j);

/// "paper-ernn", "paper-lstm", "paper-gru", "paper-narx", "paper-esn".
HyperSpace preset_space(std::string_view name);

/// Fixed configurations for the synthetic tasks ("mg", "narma", "mso").
ModelConfig table_config(Arch arch, std::string_view task);

/// Flat JSON config drawn from the space (base keys plus sampled keys).
Json sample_config_json(const HyperSpace& space, RngStream& rng);
ModelConfig sample_config(const HyperSpace& space, RngStream& rng);

// ---------------------------------------------------------------------------
// Search

enum class TrialStatus { ok, diverged };
std::string_view to_string(TrialStatus s);

struct TrialResult {
    Index index = 0;
    Json config;
    std::uint64_t seed = 0;
    double valid_nrmse = std::numeric_limits<double>::infinity();
    std::optional<double> test_nrmse;
    double seconds = 0.0;
    TrialStatus status = TrialStatus::ok;
};

Json to_json(const TrialResult& t);
TrialResult trial_from_json(const Json& j);

/// Seed of trial `index` under `master`.
std::uint64_t trial_seed(std::uint64_t master, Index index);

/// Epoch counts from the protocol are written into each sampled config.
/// Trials listed in `done` are kept and not rerun. `on_trial` is called under
/// a lock after each new trial. The result is sorted by (valid_nrmse, index).
std::vector<TrialResult> run_search(const HyperSpace& space, const TaskDataset& data, Index budget, int workers,
                                    std::uint64_t master_seed, const EvalProtocol& protocol = {},
                                    const std::vector<TrialResult>& done = {},
                                    const std::function<void(const TrialResult&)>& on_trial = {});

/// Ordering used by run_search.
void rank_trials(std::vector<TrialResult>& trials);

struct FinalEval {
    std::vector<double> test_nrmse; // per restart, +inf when diverged
    double best = std::numeric_limits<double>::infinity();
    double mean = 0.0;              // over finite restarts
    double stddev = 0.0;
    Index best_restart = -1;
    RunOutcome best_run;
};

/// Restarts trained on train + validation and scored on the test part.
/// Gradient RNNs and NARX use protocol.test_epochs. Throws std::runtime_error
/// when every restart diverges.
FinalEval final_eval(const ModelConfig& cfg, const TaskDataset& data, const EvalProtocol& protocol, std::uint64_t seed);

} // namespace rnnfc
