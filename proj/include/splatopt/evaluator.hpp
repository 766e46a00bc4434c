// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/profile.hpp"
#include "splatopt/program.hpp"
#include "splatopt/render.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace splatopt {

class UnknownTag : public Error {
  public:
    using Error::Error;
};

class CompileError : public Error {
  public:
    using Error::Error;
};

class RuntimeError : public Error {
  public:
    using Error::Error;
};

class MeasureParseError : public Error {
  public:
    using Error::Error;
};

enum class FailureKind { CompileError, RuntimeError, MarkerViolation, EquivalenceRejected };

std::string to_string(FailureKind k);
FailureKind failure_from_string(const std::string &s);

struct EvaluationResult {
    bool compiled = false;
    bool ran = false;
    double accuracy_err = 0.0;
    double latency = 0.0;
    double speedup = 0.0;
    double score = 0.0;
    std::optional<FailureKind> failure;
    std::string detail;

    static EvaluationResult failed(FailureKind kind, std::string detail);
};

inline constexpr double kDefaultTolerance = 1e-3;

/// Speedup when accuracy_err <= tolerance, else 0.
double combined_score(double accuracy_err, double speedup, double tolerance = kDefaultTolerance);

// Threshold test on one workload or profile quantity. Metrics:
// mean_per_tile, var_per_tile, mean_computed_fraction, var_computed_fraction,
// ai_margin (ai_kernel / ai_turning_point), achieved_occupancy_pct.
struct Condition {
    std::string metric;
    std::string op; // one of >=, >, <=, <
    double value = 0.0;

    bool holds(const WorkloadStats &wl, const SystemProfile &sys) const;
};

struct TransformCatalogEntry {
    std::string tag;
    double speedup_factor = 1.0;
    std::optional<Condition> condition;
    // Applied instead of speedup_factor when the condition fails.
    double fallback_factor = 1.0;
    bool unsafe = false;
    double accuracy_penalty = 0.0;
    // Name of a render defect the transform introduces, e.g. "inner-loop-once".
    std::string defect;
};

class TransformCatalog {
  public:
    TransformCatalog() = default;
    explicit TransformCatalog(std::vector<TransformCatalogEntry> entries);

    /// The shipped catalog; data/catalog.json holds the same entries.
    static TransformCatalog defaults();
    /// Throws InputError for bad entries (non-positive factors, unknown
    /// metric or operator, safe entries with a penalty or defect).
    static TransformCatalog from_json(const nlohmann::json &j);
    static TransformCatalog load(const std::filesystem::path &path);

    const std::vector<TransformCatalogEntry> &entries() const { return entries_; }
    const TransformCatalogEntry *find(const std::string &tag) const;

  private:
    std::vector<TransformCatalogEntry> entries_;
};

nlohmann::json catalog_to_json(const TransformCatalog &c);

/// Product of 1/factor over distinct tags, with each entry's condition
/// selecting speedup_factor or fallback_factor. Throws UnknownTag.
double cost_model_latency(const std::vector<std::string> &tags, const WorkloadStats &wl, const SystemProfile &sys,
                          const TransformCatalog &catalog);

struct Measurement {
    double accuracy_err = 0.0;
    double latency = 0.0;
};

// Produces accuracy and latency for one candidate. Implementations throw
// CompileError, RuntimeError, MeasureParseError or Timeout and must be safe
// to call concurrently.
class EvaluationBackend {
  public:
    virtual ~EvaluationBackend() = default;
    virtual Measurement measure(const SourceProgram &candidate) = 0;
};

// Latency from the candidate's @transform tags, in units of the baseline.
// Accuracy is zero for safe tags; unsafe tags add their penalty plus the mean
// absolute error of the matching defect render against the oracle.
class CostModelBackend : public EvaluationBackend {
  public:
    CostModelBackend(TransformCatalog catalog, WorkloadStats workload, SystemProfile system, Scene scene);
    Measurement measure(const SourceProgram &candidate) override;

  private:
    double defect_error(const std::string &defect);

    TransformCatalog catalog_;
    WorkloadStats workload_;
    SystemProfile system_;
    Scene scene_;
    std::mutex mu_;
    std::optional<RenderOutput> oracle_;
    std::map<std::string, double> defect_errors_;
};

struct SubprocessCommands {
    std::string compile_cmd;
    std::string run_cmd;
    std::string measure_cmd;
    double timeout_seconds = 300.0;
    // Unit the measure command prints: "s", "ms" or "us". Latency is
    // reported in this unit.
    std::string latency_unit = "s";
    std::string source_name = "candidate.cu";
    std::filesystem::path work_root;
};

struct CommandPaths {
    std::filesystem::path src;
    std::filesystem::path bin;
    std::filesystem::path scene;
    std::filesystem::path out;
};

/// Replaces {src}, {bin}, {scene} and {out} with shell-quoted paths.
std::string assemble_command(const std::string &tmpl, const CommandPaths &paths);

/// Last non-empty line of `stdout_text` as a decimal float, converted from
/// seconds to `unit`. Throws MeasureParseError.
double parse_latency(const std::string &stdout_text, const std::string &unit);

// Compile, run and measure through configured shell commands. Every call
// gets its own directory under work_root.
class SubprocessBackend : public EvaluationBackend {
  public:
    SubprocessBackend(SubprocessCommands commands, Scene scene);
    Measurement measure(const SourceProgram &candidate) override;

  private:
    SubprocessCommands commands_;
    Scene scene_;
    RenderOutput oracle_;
    std::atomic<std::uint64_t> counter_{0};
};

// Scores candidates against a baseline measured once at construction.
class Evaluator {
  public:
    /// Throws InputError when the baseline itself cannot be measured or
    /// misses the tolerance.
    Evaluator(SourceProgram baseline, std::shared_ptr<EvaluationBackend> backend,
              double tolerance = kDefaultTolerance);

    /// Never throws; failures come back as zero-score results.
    EvaluationResult evaluate(const SourceProgram &candidate) const;

    const EvaluationResult &baseline_result() const { return baseline_result_; }
    const SourceProgram &baseline() const { return baseline_; }
    double tolerance() const { return tolerance_; }

  private:
    SourceProgram baseline_;
    std::shared_ptr<EvaluationBackend> backend_;
    double tolerance_;
    EvaluationResult baseline_result_;
};

nlohmann::json result_to_json(const EvaluationResult &r);

} // namespace splatopt
