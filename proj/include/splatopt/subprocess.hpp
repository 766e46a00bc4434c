// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

namespace splatopt {

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// Runs `command` through /bin/sh in `cwd`. Throws Timeout (after killing the
/// whole process group) when it runs longer than `timeout_seconds`.
CommandResult run_command(const std::string &command, const std::filesystem::path &cwd, double timeout_seconds);

/// Single-quotes `s` for /bin/sh.
std::string shell_quote(const std::string &s);

} // namespace splatopt
