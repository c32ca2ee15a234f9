#pragma once

#include "mei/network.hpp"
#include "mei/schedule.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mei {

struct SolverOptions {
    int max_iterations = 200;
    double head_tolerance = 1e-10;   // m, per link equation
    double flow_tolerance = 1e-10;   // m^3/h, per junction balance
    int max_status_checks = 20;
    double tank_tolerance = 1e-6;   // m, implicit level iteration
    int max_tank_iterations = 20;
    double dt_hours = 1.0;
    int max_substeps = 16;
};

/// Raised when a single network solve fails (non-convergence, isolated
/// demand, tank iteration failure).
class SolveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LinkState : std::uint8_t { open, closed, active };

struct PumpOperatingPoint {
    bool running = false;
    double flow = 0.0;        // m^3/h
    double head_gain = 0.0;   // m, clamped at zero
    double efficiency = 1.0;
    double power_kw = 0.0;
};

/// Hydraulic state over one time step. With sub-stepping (tank filling or
/// draining to a bound inside the step) flows are time averages, heads are
/// time-weighted means and `link_energy_head` is the flow-weighted mean h so
/// that flow * h * rho * g reproduces the step's energy exactly.
struct HydraulicState {
    int time_index = 0;
    int clock_hour = 0;
    double dt_hours = 1.0;
    int substeps = 1;
    Eigen::VectorXd link_flows;        // m^3/h, positive from -> to
    Eigen::VectorXd node_heads;        // m, NetworkIndex node order
    /// Head expended along each link: |dH| for pipes and valves, gain / eta
    /// for running pumps, zero for closed links.
    Eigen::VectorXd link_energy_head;
    /// Signed head loss from -> to, negative across a running pump.
    Eigen::VectorXd link_headloss;
    Eigen::VectorXd junction_demands;  // m^3/h
    std::vector<LinkState> link_states;
    std::vector<PumpOperatingPoint> pumps;
    Eigen::VectorXd tank_levels;       // end of step, m
    Eigen::VectorXd tank_net_inflow;   // m^3/h
    Eigen::VectorXd reservoir_outflow; // m^3/h
    double min_consumer_pressure = 0.0;
    double pump_energy_kwh = 0.0;
};

struct SimulationResult {
    std::vector<HydraulicState> states;
    bool feasible = true;
    std::string infeasibility_reason;
    double p_low = 0.0;                 // m, over consumers and steps
    Eigen::VectorXd energy_per_step;    // kWh
    Eigen::VectorXd injected_volume;    // m^3 per reservoir
    Eigen::MatrixXd tank_inflow;        // tanks x steps, net inflow m^3/h
    Eigen::VectorXd initial_tank_levels;
    Eigen::VectorXd final_tank_levels;
    std::vector<std::string> warnings;

    double total_energy() const { return energy_per_step.sum(); }
};

/// Boundary data for one network solve.
struct SolveInput {
    Eigen::VectorXd junction_demands;   // m^3/h
    std::vector<bool> pump_on;
    Eigen::VectorXd reservoir_heads;    // m
    Eigen::VectorXd tank_heads;         // m (elevation + level)
    /// Per tank: +1 full (no inflow), -1 empty (no outflow), 0 free.
    std::vector<int> tank_limits;
};

/// Demand-driven steady-state solver. Newton iteration on the mixed
/// flow/head system (link head-loss laws plus junction continuity), with a
/// status loop for check valves, pump shut-off, PRV modes and full/empty
/// tanks. Owns mutable working state; use one instance per thread.
class HydraulicSolver {
public:
    explicit HydraulicSolver(const Network& net, SolverOptions options = {});
    HydraulicSolver(HydraulicSolver&&) noexcept;
    ~HydraulicSolver();

    const NetworkIndex& index() const { return index_; }
    const SolverOptions& options() const { return options_; }

    /// Solves one steady state. Throws SolveError on failure.
    HydraulicState solve(const SolveInput& input);

    /// Advances tank levels by `dt` hours with backward Euler, sub-stepping
    /// at tank bound events. `input.tank_heads`/`tank_limits` are derived
    /// from `levels`; the returned state is the step average.
    HydraulicState step_tanks(Eigen::VectorXd& levels, double dt, SolveInput input);

    /// Forgets the warm start.
    void reset();

private:
    struct LinkData;
    struct Workspace;

    void assemble(const SolveInput& in, const Eigen::VectorXd& x, Eigen::VectorXd& f, bool with_jacobian);
    double residual_norm(const Eigen::VectorXd& f) const;
    void newton(const SolveInput& in);
    bool reduced_step(const Eigen::VectorXd& f, Eigen::VectorXd& dx);
    void full_step(const Eigen::VectorXd& f, Eigen::VectorXd& dx);
    void prune_branches();
    void set_branch_flows(const SolveInput& in);
    void recover_branch_heads(const SolveInput& in);
    bool update_status(const SolveInput& in);
    void mark_isolated(const SolveInput& in);
    HydraulicState make_state(const SolveInput& in) const;
    std::pair<HydraulicState, Eigen::VectorXd> implicit_step(const Eigen::VectorXd& levels, double dt,
                                                             SolveInput& in);

    const Network& net_;
    NetworkIndex index_;
    SolverOptions options_;
    std::vector<LinkData> links_;
    Eigen::VectorXd tank_area_;
    Eigen::VectorXd x_;              // [flows; junction heads]
    std::vector<LinkState> status_;
    std::vector<std::uint8_t> closed_by_;  // reason code per link
    std::vector<char> isolated_;
    bool warm_ = false;
    Eigen::VectorXd deriv_;  // d(link equation)/d(own flow); 0 for active PRVs
    std::unique_ptr<Workspace> work_;
};

/// One steady-state solve on a fresh solver. `boundary_heads` holds the
/// reservoir heads followed by the tank heads.
HydraulicState solve_timestep(const Network& net, const Eigen::VectorXd& junction_demands,
                              const std::vector<bool>& pump_on, const Eigen::VectorXd& boundary_heads,
                              const SolverOptions& options = {});

/// Backward-Euler tank update L1 = L0 + dt * Q(L1) / A solved by a
/// diagonal secant iteration on the fixed-point residual. `net_inflow`
/// maps candidate levels to net tank inflows (m^3/h). Returns the new levels
/// computed from the last evaluated inflow, so volume and flow agree
/// exactly. Throws SolveError after `max_iterations`.
Eigen::VectorXd implicit_tank_levels(const Eigen::VectorXd& levels, double dt, const Eigen::VectorXd& areas,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& net_inflow,
                                     double tolerance = 1e-6, int max_iterations = 20);

/// Extended-period simulation of `schedule` from the network's start hour.
/// Never throws for hydraulic failure: the result is flagged infeasible with
/// a reason and truncated at the failing step.
SimulationResult simulate_eps(const Network& net, const PumpSchedule& schedule, const SolverOptions& options = {});

/// Demands of every junction at a clock hour, m^3/h.
Eigen::VectorXd junction_demands_at(const Network& net, int clock_hour);

/// Max |continuity residual| over junctions, m^3/h.
double max_mass_residual(const Network& net, const HydraulicState& state);
/// Max |head-law residual| over open links, m (closed links: |Q| in m^3/h).
double max_head_residual(const Network& net, const HydraulicState& state);

/// One CSV per run: time,element_id,kind,flow_m3h,head_m,level_m,eff,power_kW.
void write_state_csv(std::ostream& out, const Network& net, const SimulationResult& result);

}  // namespace mei
