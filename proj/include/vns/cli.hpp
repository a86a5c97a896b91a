#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vns/problems.hpp"

namespace vns::cli {

// One structured config file (JSON); command-line flags override file keys.
struct RunConfig {
    std::string problem = "cylinder";  // cylinder | pmsm | imported
    std::string preset = "dg";         // single | dg | coupling
    std::uint64_t seed = 1;
    std::string out = "out";
    int threads = 0;  // 0 = hardware concurrency
    bool desk_scale = false;
    std::string geometry;  // patch file (imported mode)
    long checkpoint_every = 0;

    std::optional<std::size_t> interior, dirichlet, neumann, interfaces, antiperiodic;
    std::vector<opt::SchedulePhase> schedule;  // empty = problem default
    std::optional<double> beta_dirichlet, beta_interface, beta_rotor, beta_stator;
};

RunConfig load_config(const std::string& path);

struct ResolvedRun {
    prob::BuiltProblem built;
    prob::SampleBudgets budgets;
    std::vector<opt::SchedulePhase> schedule;
    RunConfig config;
};

ResolvedRun resolve(const RunConfig& config);

void write_checkpoint(const std::string& path, const fn::EnergySpec& spec,
                      const std::vector<double>& theta);
std::vector<double> read_checkpoint(const std::string& path, const fn::EnergySpec& spec);

// Exit codes: 0 ok, 1 diverged, 2 config/usage error.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace vns::cli
