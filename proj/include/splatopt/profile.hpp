// Copyright Contributors to the splatopt project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatopt/error.hpp"
#include "splatopt/render.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

namespace splatopt {

class MissingMetric : public InputError {
  public:
    explicit MissingMetric(const std::string &name)
        : InputError("missing metric '" + name + "'"), name_(name) {}
    const std::string &name() const { return name_; }

  private:
    std::string name_;
};

class MalformedRow : public InputError {
  public:
    MalformedRow(std::size_t line, const std::string &why)
        : InputError("line " + std::to_string(line) + ": " + why), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

class EmptyStalls : public Error {
  public:
    using Error::Error;
};

// Profiler counters for one kernel, as exported to `metric,value` CSV.
struct SystemProfile {
    double ai_turning_point = 0.0;   // FLOP/byte
    double perf_turning_point = 0.0; // FLOP/s
    double ai_kernel = 0.0;          // FLOP/byte
    double perf_kernel = 0.0;        // FLOP/s
    double warp_cycles_per_issued_instruction = 0.0;
    double theoretical_occupancy_pct = 0.0;
    double achieved_occupancy_pct = 0.0;
    double block_limit_warps = 0.0;
    std::map<std::string, double> stalls; // name without the `stall_` prefix
    std::string top_unit_name;
    double top_unit_util_pct = 0.0;
    // Rows that are neither required nor stalls, kept verbatim.
    std::map<std::string, std::string> extra;
};

struct GpuShape {
    std::uint32_t sm_count = 1;
    std::uint32_t max_threads_per_sm = 2048;
    std::uint32_t block_limit = 1; // resident blocks per SM
};

enum class Boundedness { ComputeBound, MemoryBound };

struct RooflineVerdict {
    Boundedness kind = Boundedness::ComputeBound;
    double margin = 0.0; // ai_kernel / ai_turning_point
};

struct OccupancyAnalysis {
    std::uint64_t blocks_x = 0;
    std::uint64_t blocks_y = 0;
    std::uint64_t total_blocks = 0;
    std::uint64_t concurrent_blocks = 0;
    std::uint64_t waves = 0;
};

SystemProfile parse_metrics_csv(const std::string &text);
SystemProfile parse_metrics(const std::filesystem::path &file);
std::string metrics_to_csv(const SystemProfile &p);

WorkloadStats parse_workload_csv(const std::string &text);
WorkloadStats parse_workload(const std::filesystem::path &file);
std::string workload_to_csv(const WorkloadStats &w);

RooflineVerdict classify_roofline(const SystemProfile &p);

OccupancyAnalysis compute_waves(std::uint32_t width, std::uint32_t height, std::array<std::uint32_t, 2> tile,
                                const GpuShape &shape);

/// Largest stall, ignoring the `selected` issue-slot row; ties go to the
/// lexicographically smaller name. Throws EmptyStalls.
std::pair<std::string, double> dominant_stall(const SystemProfile &p);

std::string to_string(Boundedness b); // "compute-bound" / "memory-bound"

} // namespace splatopt
