#pragma once

// Batch front end: generate | search | eval | train. Results go to files,
// progress to the error stream.

#include "rnnfc/evalsearch.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rnnfc {

enum ExitCode { exit_ok = 0, exit_config = 2, exit_runtime = 3 };

/// Resolved experiment description. JSON keys:
///   task       "mg" | "narma" | "mso" | "orange" | "acea" | "gefcom" | "csv"
///   n          series length for generated tasks
///   data_seed  seed for NARMA inputs and dataset surrogates
///   csv        {path, preset, time_column, value_column, exog_columns, step_seconds, corrupted_marker}
///   space      preset name or inline space object (search)
///   model      fixed model config (eval, train)
///   budget, seed, workers, out, protocol {transient, rnn_epochs, narx_epochs, test_epochs, restarts}
struct Experiment {
    std::string task = "mg";
    Index n = 15000;
    std::uint64_t data_seed = 1;
    Json csv = Json::object();
    Json space;
    Json model;
    Index budget = 500;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out = "out";
    EvalProtocol protocol;
};

Experiment experiment_from_json(const Json& j);
Json to_json(const Experiment& e);
TaskDataset load_task(const Experiment& e);

int run_cli(const std::vector<std::string>& args, std::ostream& err);

} // namespace rnnfc
