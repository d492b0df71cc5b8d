// The six batch commands behind the command-line tool.  Each one is a
// pure function of (parsed config, input files, master seed): it reads
// its inputs, runs the corresponding pipeline, and writes its output
// files under `out_dir`.  Config problems throw ConfigError, malformed
// or unreadable data files throw CsvDataError; the main dispatcher maps
// those to exit codes 2 and 3.
#pragma once

#include <string>

#include "json.hpp"

namespace apekit::cli {

// Dispatches `command` ("solve-simulate", "table1", "estimate-beliefs",
// "regress", "counterfactual", "bias-correct"), creating `out_dir`
// first.  Throws ConfigError for unknown commands.
void run_command(const std::string& command, const nlohmann::json& config,
                 const std::string& out_dir);

}  // namespace apekit::cli
