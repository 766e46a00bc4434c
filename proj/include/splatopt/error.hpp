// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splatopt {

// Root of every error the library throws. Each module derives named errors
// from this so callers can catch by kind or all at once.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed input files (JSON, CSV, config). The CLI maps these to exit code 2.
class InputError : public Error {
  public:
    using Error::Error;
};

// A network request or subprocess exceeded its time budget.
class Timeout : public Error {
  public:
    using Error::Error;
};

} // namespace splatopt
