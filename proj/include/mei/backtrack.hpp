#pragma once

#include "mei/hydraulics.hpp"
#include "mei/network.hpp"

#include <Eigen/Core>

#include <limits>
#include <string>
#include <vector>

namespace mei {

inline constexpr double kDefaultFlowEpsilon = 1e-6;  // m^3/h

/// Marker stored for MEI values that are undefined (no inflow at that step).
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

/// Directed edge oriented by the simulated flow.
struct FlowEdge {
    int from = -1;
    int to = -1;
    int link = -1;
    double flow = 0.0;  // m^3/h, > 0
    double h = 0.0;     // m: |dH| for pipes and valves, gain / eta for pumps
    bool pump = false;
};

/// Sources are the reservoirs (in network order) followed by one storage
/// source per tank. A tank discharging on balance injects its net discharge
/// through its storage source; a tank charging on balance withdraws its net
/// charge like a consumer.
struct FlowSnapshot {
    int time_index = 0;
    double dt_hours = 1.0;
    int node_count = 0;
    std::vector<FlowEdge> edges;
    Eigen::VectorXd inflow;        // Q_j: edge inflow plus source injection, m^3/h
    Eigen::VectorXd withdrawal;    // demand, tank net charge or reservoir net intake, m^3/h
    Eigen::VectorXd injection;     // per source, m^3/h
    std::vector<int> source_node;  // node of each source
    std::vector<int> active_sources;
};

/// r (fractions) or H (cumulative head, m): sources x nodes, one per step.
using FractionMatrix = Eigen::MatrixXd;
using HeadMatrix = Eigen::MatrixXd;

FlowSnapshot build_flow_snapshot(const HydraulicState& state, const Network& net,
                                 double flow_epsilon = kDefaultFlowEpsilon);

/// Source fractions by topological propagation; falls back to a sparse
/// linear solve when the oriented graph has a directed cycle. Throws
/// std::runtime_error naming a node that carries flow no source reaches.
FractionMatrix solve_fractions(const FlowSnapshot& snap);

/// Flow-weighted cumulative head per source and node. Entries where the
/// source does not reach the node are 0 (excluded through r = 0).
HeadMatrix solve_head_accumulation(const FlowSnapshot& snap, const FractionMatrix& r);

/// Per-component energy intensities of a source, kWh/m^3.
struct SourceIntensity {
    double transmission = 0.0;
    double treatment = 0.0;
    double distribution = 0.0;  // non-zero only for tank storage

    double total() const { return transmission + treatment + distribution; }
};

struct TankEnergyState {
    Eigen::MatrixXd charge;   // tanks x steps, max(net inflow, 0) m^3/h
    Eigen::VectorXd volume;   // Q_n, m^3 charged over the horizon
    std::vector<SourceIntensity> intensity;  // resolved pre-injection EI per tank
    std::vector<std::string> warnings;
};

/// Solves the tank pre-injection intensities as one linear system over all
/// tanks. `reservoir_eis` holds transmission/treatment per reservoir.
/// Throws std::runtime_error when tanks only feed each other.
TankEnergyState resolve_tank_ei(const std::vector<FlowSnapshot>& snapshots, const std::vector<FractionMatrix>& r,
                                const std::vector<HeadMatrix>& heads,
                                const std::vector<SourceIntensity>& reservoir_eis);

struct EnergyClosure {
    double delivered = 0.0;      // sum MEI q dt over junction demands, kWh
    double pump_energy = 0.0;    // sum E_t
    double dissipation = 0.0;    // pipes and valves
    double pre_injection = 0.0;  // reservoir injections times their EI
    double tank_storage = 0.0;   // sum_n EI_n (V_out - V_in)
    double absorbed = 0.0;       // reservoir net intake times its MEI
    double residual = 0.0;
    double relative = 0.0;
    /// delivered - (pump + pre-injection): zero only if nothing dissipates.
    double consumption_gap = 0.0;
};

struct MEIReport {
    int steps = 0;
    std::vector<std::string> node_ids;
    std::vector<std::string> source_ids;
    Eigen::MatrixXd mei;            // steps x nodes, NaN where undefined
    Eigen::MatrixXd transmission;
    Eigen::MatrixXd treatment;
    Eigen::MatrixXd distribution;   // includes the distribution share of tank water
    Eigen::MatrixXd pre_injection;  // sum_i r_i MEI_i^Pre-inj with tank EIs substituted
    Eigen::MatrixXd demand;         // steps x nodes, junction demand m^3/h
    Eigen::MatrixXd inflow;         // steps x nodes, Q_j m^3/h
    Eigen::VectorXd dt_hours;       // per step
    std::vector<FractionMatrix> fractions;
    std::vector<HeadMatrix> heads;
    std::vector<SourceIntensity> source_intensity;
    TankEnergyState tanks;
    std::vector<std::string> warnings;
};

/// MEI and its components over every node and step. Source intensities are the reservoir
/// constants followed by the resolved tank values.
MEIReport assemble_mei(const std::vector<FlowSnapshot>& snapshots, const std::vector<FractionMatrix>& r,
                       const std::vector<HeadMatrix>& heads, const std::vector<SourceIntensity>& source_eis);

/// Full pipeline from a simulation: snapshots, fractions, heads, tank EIs,
/// assembly.
MEIReport backtrack(const Network& net, const SimulationResult& sim, double flow_epsilon = kDefaultFlowEpsilon);

struct DailyMEI {
    Eigen::VectorXd node;   // demand-weighted daily value per node, NaN if no demand
    Eigen::VectorXd volume; // daily demand per node, m^3
    double system = kUndefined;
};

DailyMEI daily_average_mei(const MEIReport& report);

EnergyClosure energy_closure(const MEIReport& report, const SimulationResult& sim, const Network& net);

/// Largest |sum_i r_ij - 1| over nodes with inflow, across all steps.
double max_fraction_error(const MEIReport& report);

}  // namespace mei
