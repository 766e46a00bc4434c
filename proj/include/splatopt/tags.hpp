// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace splatopt {

// Candidates produced by the mock generator record what they did as comment
// lines inside the evolve block:
//   // @transform fastmath
//   // @generator GPT-5
inline constexpr std::string_view kTransformTagPrefix = "// @transform ";
inline constexpr std::string_view kGeneratorTagPrefix = "// @generator ";

namespace detail {

inline std::string trim_ws(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> tagged_values(std::string_view text, std::string_view prefix) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim_ws(line);
        if (t.rfind(prefix, 0) == 0) out.push_back(trim_ws(std::string_view(t).substr(prefix.size())));
    }
    return out;
}

} // namespace detail

/// Every `@transform` tag in the text, in order of appearance.
inline std::vector<std::string> transform_tags(std::string_view program_text) {
    return detail::tagged_values(program_text, kTransformTagPrefix);
}

/// Label of the first `@generator` line, or empty.
inline std::string generator_label(std::string_view program_text) {
    auto v = detail::tagged_values(program_text, kGeneratorTagPrefix);
    return v.empty() ? std::string() : v.front();
}

} // namespace splatopt
