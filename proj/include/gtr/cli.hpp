// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points. Subcommands:
//   ingest | pretrain | train | eval | scene | viz | bench
// Exit codes: 0 success, 1 config/usage, 2 data, 3 numeric, 4 I/O.

#pragma once

#include <string>

#include "gtr/config.hpp"

namespace gtr::cli {

int run(int argc, const char* const* argv);

// Individual commands; they throw gtr errors that run() maps to exit codes.
void cmd_ingest(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, const std::string& resume_path = "",
               const std::string& tables_path = "");
void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split);
void cmd_scene(const RunConfig& cfg, const std::string& checkpoint);
void cmd_viz(const RunConfig& cfg, const std::string& tables_path);
void cmd_bench(const RunConfig& cfg);

}  // namespace gtr::cli
