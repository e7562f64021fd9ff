// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/cli.hpp"

int main(int argc, char** argv) { return gtr::cli::run(argc, argv); }
