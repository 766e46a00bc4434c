// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/error.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace splatopt {

class TemplateError : public InputError {
  public:
    using InputError::InputError;
};

// Prompt templates with {{placeholder}} substitution. The shipped files in
// data/templates/ are byte-identical to the built-in defaults.
class TemplateSet {
  public:
    /// plan, prune, generate, check and review templates compiled into the library.
    static TemplateSet defaults();

    /// Defaults overridden by any `<name>.tmpl` present in `dir`.
    static TemplateSet load(const std::filesystem::path &dir);

    const std::string &get(const std::string &name) const;
    void set(const std::string &name, std::string text) { templates_[name] = std::move(text); }

    /// Substitutes every {{key}}. Throws TemplateError for a placeholder with
    /// no value.
    std::string render(const std::string &name, const std::map<std::string, std::string> &values) const;

    static constexpr std::string_view kNames[] = {"plan", "prune", "generate", "check", "review"};

  private:
    std::map<std::string, std::string> templates_;
};

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string> &values);

/// Body of the fenced (```) block number `index` in `text`.
std::optional<std::string> extract_fenced(std::string_view text, std::size_t index = 0);

} // namespace splatopt
