#pragma once

#include "mei/pump_curve.hpp"

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mei {

struct Junction {
    std::string id;
    double elevation = 0.0;      // m
    double base_demand = 0.0;    // m^3/h
    std::string pattern_id;      // empty: network default pattern
    Eigen::Vector2d coordinates = Eigen::Vector2d::Zero();

    bool operator==(const Junction&) const = default;
};

struct Tank {
    std::string id;
    double elevation = 0.0;   // bottom, m
    double init_level = 0.0;  // m above bottom
    double min_level = 0.0;
    double max_level = 0.0;
    double diameter = 1.0;    // cylindrical, m
    Eigen::Vector2d coordinates = Eigen::Vector2d::Zero();

    double area() const;
    bool operator==(const Tank&) const = default;
};

/// Fixed-head source of treated water. The pre-injection energy intensity is
/// always the sum of the transmission and treatment components.
struct InjectionPoint {
    std::string id;
    double head = 0.0;             // m
    double transmission_ei = 0.0;  // kWh/m^3
    double treatment_ei = 0.0;     // kWh/m^3
    double target_fraction = 0.0;
    Eigen::Vector2d coordinates = Eigen::Vector2d::Zero();

    double pre_injection_ei() const { return transmission_ei + treatment_ei; }
    bool operator==(const InjectionPoint&) const = default;
};

enum class LinkStatus { open, closed };

struct Pipe {
    std::string id;
    std::string from_node;
    std::string to_node;
    double length = 0.0;          // m
    double diameter = 0.0;        // m
    double roughness_coeff = 100; // Hazen-Williams C
    double minor_loss = 0.0;
    bool has_check_valve = false;
    LinkStatus initial_status = LinkStatus::open;

    bool operator==(const Pipe&) const = default;
};

struct Pump {
    std::string id;
    std::string from_node;
    std::string to_node;
    HeadCurve hq_curve;
    std::optional<EfficiencyCurve> eff_curve;  // constant bep_efficiency when absent
    std::optional<Eigen::Vector2d> bep;        // (flow m^3/h, head m)
    double bep_efficiency = kDefaultBepEfficiency;
    std::string head_curve_id;                 // provenance for INP round trips

    double efficiency(double flow) const;
    bool operator==(const Pump&) const = default;
};

struct PressureReducingValve {
    std::string id;
    std::string from_node;
    std::string to_node;
    double setting = 0.0;   // pressure head, m
    double diameter = 0.0;  // m
    double minor_loss = 0.0;

    bool operator==(const PressureReducingValve&) const = default;
};

struct Pattern {
    std::string id;
    std::vector<double> multipliers;

    bool operator==(const Pattern&) const = default;
};

struct PriceSeries {
    std::string id;
    std::vector<double> prices;  // currency per kWh, indexed by clock hour

    bool operator==(const PriceSeries&) const = default;
};

/// Tabulated curve as read from an INP [CURVES] section (flow, head) in SI.
struct Curve {
    std::string id;
    std::vector<Eigen::Vector2d> points;

    bool operator==(const Curve&) const = default;
};

inline constexpr int kDefaultHorizonSteps = 24;

struct Network {
    std::string title;
    std::vector<Junction> junctions;
    std::vector<InjectionPoint> reservoirs;
    std::vector<Tank> tanks;
    std::vector<Pipe> pipes;
    std::vector<Pump> pumps;
    std::vector<PressureReducingValve> valves;
    std::vector<Pattern> patterns;
    std::vector<Curve> curves;
    std::string default_pattern_id;
    int horizon_start_hour = 0;
    int horizon_steps = kDefaultHorizonSteps;

    const Pattern* find_pattern(const std::string& id) const;
    /// Demand of junction `j` at clock hour `hour`, m^3/h.
    double demand(std::size_t j, int hour) const;
    /// Junctions whose demand is positive at some hour.
    bool is_consumer(std::size_t j) const;

    bool operator==(const Network&) const = default;
};

enum class NodeKind { junction, reservoir, tank };
enum class LinkKind { pipe, pump, valve };

/// Dense integer indexing of a network. Nodes are ordered junctions,
/// reservoirs, tanks; links are ordered pipes, pumps, valves. Every solver
/// vector in the library uses this order.
class NetworkIndex {
public:
    explicit NetworkIndex(const Network& net);

    int node_count() const { return n_junctions_ + n_reservoirs_ + n_tanks_; }
    int link_count() const { return n_pipes_ + n_pumps_ + n_valves_; }
    int junction_count() const { return n_junctions_; }
    int reservoir_count() const { return n_reservoirs_; }
    int tank_count() const { return n_tanks_; }
    int pipe_count() const { return n_pipes_; }
    int pump_count() const { return n_pumps_; }
    int valve_count() const { return n_valves_; }

    int reservoir_node(int r) const { return n_junctions_ + r; }
    int tank_node(int t) const { return n_junctions_ + n_reservoirs_ + t; }
    int pump_link(int p) const { return n_pipes_ + p; }
    int valve_link(int v) const { return n_pipes_ + n_pumps_ + v; }

    NodeKind node_kind(int node) const;
    /// Position of the node within its own element vector.
    int local_index(int node) const;
    LinkKind link_kind(int link) const;
    int local_link_index(int link) const;

    std::optional<int> find_node(const std::string& id) const;
    std::optional<int> find_link(const std::string& id) const;
    const std::string& node_id(int node) const { return node_ids_[node]; }
    const std::string& link_id(int link) const { return link_ids_[link]; }
    double node_elevation(int node) const { return node_elevation_[node]; }

    /// Link endpoints as node indices; -1 for dangling references.
    int link_from(int link) const { return link_from_[link]; }
    int link_to(int link) const { return link_to_[link]; }

private:
    int n_junctions_ = 0, n_reservoirs_ = 0, n_tanks_ = 0;
    int n_pipes_ = 0, n_pumps_ = 0, n_valves_ = 0;
    std::vector<std::string> node_ids_;
    std::vector<std::string> link_ids_;
    std::vector<double> node_elevation_;
    std::vector<int> link_from_, link_to_;
    std::map<std::string, int> node_lookup_;
    std::map<std::string, int> link_lookup_;
};

struct Violation {
    std::string element;
    std::string rule;

    bool operator==(const Violation&) const = default;
    auto operator<=>(const Violation&) const = default;
};

/// Checks every element invariant plus reachability of consumers from an
/// injection point. Violations are returned sorted, so the result does not
/// depend on element insertion order.
std::vector<Violation> validate_network(const Network& net);

}  // namespace mei
