// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#include "splatopt/templates.hpp"

#include <fstream>
#include <sstream>

namespace splatopt {

namespace {

constexpr std::string_view kPlan = R"(Task: plan
You are an expert GPU performance engineer. Analyze the CUDA kernel below and
list potential optimizations for the code inside the EVOLVE-BLOCK regions.
Return a numbered list with one optimization per item: a short title sentence,
then the rationale, then the condition under which it pays off (if any).
Write in plain language so that a human developer can audit the list.
Code produced from this plan must keep EVOLVE-BLOCK markers and leave
everything outside the blocks unchanged.

```cuda
{{program}}```
)";

constexpr std::string_view kPrune = R"(Task: prune
You proposed the optimizations below for a GPU kernel. Using the profile of the
unoptimized kernel on the target GPU, select the ones that are likely to give
a speedup and discard the rest.

Optimizations:
{{advice}}
System information:
{{system}}
Workload distribution:
{{workload}}
Answer with one line per optimization, using the ids above:
KEEP <id> (<one-line reason>)
DROP <id> (<one-line reason>)
)";

constexpr std::string_view kGenerate = R"(Task: generate
You are an expert coder helping to improve programs through evolution.
Rewrite the code inside the EVOLVE-BLOCK.
Return the full code, but keep EVOLVE-BLOCK markers.
Do not change anything else in the file.
{{advice}}
```cuda
{{program}}```
)";

constexpr std::string_view kCheck = R"(Task: check
Compare the ORIGINAL and CANDIDATE versions of the GPU kernel below and decide
whether the candidate is functionally equivalent to the original for all inputs.
Answer on the first line with exactly EQUIVALENT or NOT EQUIVALENT.
If not equivalent, give one reason per line on the following lines.

ORIGINAL:
```cuda
{{original}}```

CANDIDATE:
```cuda
{{candidate}}```
)";

constexpr std::string_view kReview = R"(Task: review
Review the candidate kernel from this iteration. Comment briefly on code
quality, likely performance, and ideas for the next iteration.

Evaluation: {{evaluation}}

```cuda
{{candidate}}```
)";

} // namespace

TemplateSet TemplateSet::defaults() {
    TemplateSet t;
    t.templates_ = {{"plan", std::string(kPlan)},
                    {"prune", std::string(kPrune)},
                    {"generate", std::string(kGenerate)},
                    {"check", std::string(kCheck)},
                    {"review", std::string(kReview)}};
    return t;
}

TemplateSet TemplateSet::load(const std::filesystem::path &dir) {
    TemplateSet t = defaults();
    for (std::string_view name : kNames) {
        const auto file = dir / (std::string(name) + ".tmpl");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        if (!in) throw TemplateError("cannot read " + file.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        t.templates_[std::string(name)] = ss.str();
    }
    return t;
}

const std::string &TemplateSet::get(const std::string &name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw TemplateError("no template named '" + name + "'");
    return it->second;
}

std::string TemplateSet::render(const std::string &name, const std::map<std::string, std::string> &values) const {
    return render_template(get(name), values);
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string> &values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const std::size_t close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder");
        out.append(tmpl.substr(pos, open - pos));
        const std::string key(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(key);
        if (it == values.end()) throw TemplateError("no value for placeholder {{" + key + "}}");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

std::optional<std::string> extract_fenced(std::string_view text, std::size_t index) {
    std::size_t pos = 0;
    for (std::size_t n = 0;; ++n) {
        // An opening fence starts a line with ``` and may carry a language tag.
        std::size_t open = std::string_view::npos;
        while (pos <= text.size()) {
            const std::size_t cand = text.find("```", pos);
            if (cand == std::string_view::npos) return std::nullopt;
            if (cand == 0 || text[cand - 1] == '\n') {
                open = cand;
                break;
            }
            pos = cand + 3;
        }
        const std::size_t body = text.find('\n', open);
        if (body == std::string_view::npos) return std::nullopt;
        std::size_t close = body + 1;
        while (true) {
            close = text.find("```", close);
            if (close == std::string_view::npos) return std::nullopt;
            if (text[close - 1] == '\n') break;
            close += 3;
        }
        if (n == index) return std::string(text.substr(body + 1, close - body - 1));
        pos = close + 3;
    }
}

} // namespace splatopt
