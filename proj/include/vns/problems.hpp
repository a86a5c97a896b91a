#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vns/functional.hpp"
#include "vns/geometry.hpp"
#include "vns/optimizer.hpp"
#include "vns/sampling.hpp"

namespace vns::prob {

enum class Preset { Single, Dg, Coupling };
Preset preset_from_string(const std::string& s);
std::string to_string(Preset p);

struct SampleBudgets {
    std::size_t interior = 0;
    std::size_t dirichlet = 0;
    std::size_t neumann = 0;
    std::size_t interfaces = 0;
    std::size_t antiperiodic = 0;
};

// Simplified machine sector: Table-style radii/angles with
// rectangle-approximated winding slots. Lengths in meters, angles in
// degrees, reluctivities relative, remanence in tesla.
struct PmsmCase {
    double r_rotor_inner = 0.016;
    double r_rotor_outer = 0.044;
    double r_airgap = 0.0447;
    double magnet_width = 0.019;
    double magnet_height = 0.007;
    double magnet_depth = 0.007;
    double r_stator_inner = 0.045;
    double r_stator_outer = 0.0675;
    double slot_angle_deg = 5.7;
    double slot_depth = 0.0082;
    int slots = 6;
    double nu_iron = 1.0 / 500.0;
    double nu_copper = 1.0;
    double nu_magnet = 1.0 / 1.05;
    double nu_air = 1.0;
    double remanence = 0.94;
    double nu0 = 1.0;  // normalized units, relative reluctivities
    double beta_rotor = 1e5;
    double beta_stator = 2e4;
    double sector_start_deg = 60.0;
    double sector_end_deg = 120.0;
};

// A problem instance before sample-plan binding: geometry, subdomain
// grouping, networks, material coefficients, boundary data and the default
// (published) and desk-scale budgets/schedules.
struct BuiltProblem {
    std::string problem;  // cylinder | pmsm | imported
    Preset preset = Preset::Single;
    geom::MultiPatchDomain domain;

    std::vector<net::NetworkConfig> networks;
    std::vector<std::string> network_labels;
    std::vector<int> patch_subdomain;
    std::vector<int> subdomain_network;
    std::vector<std::string> subdomain_names;
    std::vector<double> subdomain_coefficient;  // multiplies |grad u|^2 (eps/2, nu/2)

    int magnet_subdomain = -1;
    double magnetization = 0.0;

    double beta_dirichlet = 0.0;
    double beta_interface = 0.0;
    bool machine_betas = false;  // per-set beta by rotor/stator side
    double beta_rotor = 0.0, beta_stator = 0.0, rotor_radius = 0.0;

    fn::BoundaryFn dirichlet_data;  // g_D(x)
    fn::BoundaryFn neumann_data;    // g_N(x, n)

    std::function<double(Vec2)> reference_u;   // closed-form solution, when known
    std::function<Vec2(Vec2)> reference_grad;
    std::function<int(Vec2)> point_subdomain;  // subdomain of an arbitrary point

    SampleBudgets budgets, desk_budgets;
    std::vector<opt::SchedulePhase> schedule, desk_schedule;

    // Table-style per-subdomain interior sample fractions (machine case).
    std::vector<double> interior_fractions;
    int subdomain_index(const std::string& name) const;
    int representative_patch(int subdomain) const;
};

// Closed-form electrostatics oracle for the dielectric cylinder: returns
// (u*, grad u*).
std::pair<double, Vec2> cylinder_analytic(Vec2 x);

BuiltProblem build_cylinder(Preset preset);
BuiltProblem build_pmsm(const PmsmCase& machine, Preset preset);
// Machine problem on externally supplied patches (material labels choose
// the reluctivity: *iron* -> nu_Fe, *magnet* -> nu_PM, *air* -> nu_0,
// *copper*/*winding* -> nu_Cu).
BuiltProblem build_pmsm_from_file(const PmsmCase& machine, Preset preset,
                                  const std::string& geometry_path);

samp::SamplePlan build_plan(const BuiltProblem& built, const SampleBudgets& budgets,
                            std::uint64_t skip = 1);
fn::EnergySpec make_energy_spec(const BuiltProblem& built, const samp::SamplePlan& plan);

struct ErrorMetrics {
    double rel_l2 = 0.0;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

using SolutionField = std::function<double(int patch, Vec2 x)>;

// Weighted relative L2 plus max/mean absolute error over the plan's
// interior samples (use a fresh-skip plan to keep them out of the training
// data).
ErrorMetrics error_metrics(const SolutionField& solution,
                           const std::function<double(Vec2)>& reference,
                           const samp::SamplePlan& eval_plan);
ErrorMetrics error_metrics(const fn::SolutionEvaluator& solution,
                           const std::function<double(Vec2)>& reference,
                           const samp::SamplePlan& eval_plan);

using GradientField = std::function<Vec2(int patch, Vec2 x)>;

struct FluxStats {
    double median = 0.0;
    double mean = 0.0;
    double max = 0.0;
    double median_normalized = 0.0;  // median / max |flux on the low-coefficient side|
    std::vector<double> residuals;
};

// |coef_k dn u_k - coef_l dn u_l| over every interface sample of the plan;
// coefficients are the full material factors (2x the energy coefficient).
FluxStats interface_flux_check(const BuiltProblem& built, const samp::SamplePlan& plan,
                               const GradientField& gradient);
FluxStats interface_flux_check(const BuiltProblem& built, const samp::SamplePlan& plan,
                               const fn::SolutionEvaluator& solution);

struct LineScanRow {
    double x, y, u, ex, ey, en, eps_en, u_ref, en_ref;
};

// Horizontal scan at fixed y (default 0.1) with the radial field component;
// reference columns from the closed form when available.
std::vector<LineScanRow> cylinder_line_scan(const BuiltProblem& built,
                                            const fn::SolutionEvaluator& solution,
                                            int points = 401, double y_line = 0.1);
void write_line_scan_csv(const std::vector<LineScanRow>& rows, const std::string& path);

// x,y,subdomain,u,ux,uy[,u_ref,abs_err] over the plan's interior samples.
void write_field_csv(const BuiltProblem& built, const samp::SamplePlan& plan,
                     const fn::SolutionEvaluator& solution, const std::string& path);

struct BoundaryResiduals {
    double range = 0.0;                  // max u - min u over interior samples
    double interface_jump_median = 0.0;  // |u_k - u_l|
    double dirichlet_median = 0.0;       // |u - g_D|
    double antiperiodic_median = 0.0;    // |u(x_L) + u(x_R)|
};

BoundaryResiduals boundary_residuals(const BuiltProblem& built, const samp::SamplePlan& plan,
                                     const fn::SolutionEvaluator& solution);

}  // namespace vns::prob
