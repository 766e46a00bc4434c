// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/llm.hpp"
#include "splatopt/program.hpp"
#include "splatopt/templates.hpp"

#include <map>
#include <string>
#include <vector>

namespace splatopt {

class UnparseableVerdict : public Error {
  public:
    using Error::Error;
};

struct EquivalenceVerdict {
    bool equivalent = false;
    std::vector<std::string> reasons;
    std::string checker_role;
};

/// The first line that starts with EQUIVALENT or NOT EQUIVALENT (markdown
/// emphasis and case ignored) decides; later non-empty lines are reasons.
/// Throws UnparseableVerdict.
EquivalenceVerdict parse_verdict(const std::string &response, const std::string &checker_label = {});

std::string build_check_prompt(const SourceProgram &original, const SourceProgram &candidate,
                               const TemplateSet &templates = TemplateSet::defaults());

/// Fail-closed: backend errors and unparseable replies come back as
/// "not equivalent" with the error as the reason.
EquivalenceVerdict check(const SourceProgram &original, const SourceProgram &candidate, const BackendConfig &cfg,
                         const TemplateSet &templates = TemplateSet::defaults(), HttpTransport *transport = nullptr);
EquivalenceVerdict check(const SourceProgram &original, const SourceProgram &candidate, Gateway &gateway,
                         const TemplateSet &templates = TemplateSet::defaults(), std::uint64_t nonce = 0);

/// True iff error_rate > check_cost / (calls_per_iteration + check_cost).
bool check_benefit(double error_rate, unsigned calls_per_iteration = 2, unsigned check_cost = 1);

// detected[c][g]: checker c flagged generator g's fixture as not equivalent.
struct CrossCheckMatrix {
    std::vector<std::string> checkers;
    std::vector<std::string> generators;
    std::vector<std::vector<bool>> detected;
    // Per-cell failures (backend errors), as "checker/generator: message".
    std::vector<std::string> notes;

    bool at(const std::string &checker, const std::string &generator) const;
    bool operator==(const CrossCheckMatrix &o) const {
        return checkers == o.checkers && generators == o.generators && detected == o.detected;
    }
};

/// Each checker config's label names its row. Throws InputError when a
/// generator has no fixture.
CrossCheckMatrix build_matrix(const std::vector<BackendConfig> &checkers, const std::vector<std::string> &generators,
                              const std::map<std::string, SourceProgram> &fixtures, const SourceProgram &original,
                              const TemplateSet &templates = TemplateSet::defaults(),
                              HttpTransport *transport = nullptr);

/// "checker,<gen>,..." header then one Y/N row per checker.
std::string matrix_to_csv(const CrossCheckMatrix &m);
/// Throws InputError for ragged rows or cells other than Y/N.
CrossCheckMatrix matrix_from_csv(const std::string &csv);

} // namespace splatopt
