// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/cli.hpp"

int main(int argc, char **argv) { return splatopt::run_cli(argc, argv); }
