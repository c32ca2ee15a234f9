#pragma once

#include "mei/backtrack.hpp"
#include "mei/ga.hpp"
#include "mei/hydraulics.hpp"
#include "mei/network.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mei {

/// Demand-weighted daily value of a steps x nodes component matrix; NaN for
/// nodes without demand.
Eigen::VectorXd daily_weighted(const MEIReport& report, const Eigen::MatrixXd& component);

/// Indices of nodes with positive daily demand, in node order.
std::vector<int> consumer_nodes(const DailyMEI& daily);

struct DailyStats {
    int consumers = 0;
    double mean = kUndefined;  // unweighted over consumers
    double min = kUndefined;
    double max = kUndefined;
    double median = kUndefined;
    double system = kUndefined;  // demand-weighted over all consumers
};

DailyStats daily_stats(const DailyMEI& daily);

struct RunSummary {
    std::string scenario;
    std::uint64_t seed = 0;
    FitnessBreakdown fitness;
    DailyStats daily;
    double daily_transmission = kUndefined;  // system demand-weighted components
    double daily_treatment = kUndefined;
    double daily_distribution = kUndefined;
    std::map<std::string, double> injected_fraction;
    std::map<std::string, double> injected_volume;  // m^3 per reservoir
    Eigen::VectorXd pumping_load_kw;                // per step
    double total_energy_kwh = 0.0;
    EnergyClosure closure;
    double max_fraction_error = 0.0;
    std::map<std::string, double> tank_ei;
    std::vector<std::string> warnings;
};

RunSummary summarize(const std::string& scenario, std::uint64_t seed, const Network& net,
                     const SimulationResult& sim, const MEIReport& report, const FitnessBreakdown& fitness);

/// time,node_id,mei_kwh_m3,mei_dist,mei_preinj then one fraction column per
/// source, headed by the source id. Rows for nodes with defined MEI only;
/// time is hours since the horizon start.
void write_mei_hourly_csv(std::ostream& out, const MEIReport& report);

/// node_id,elevation_m,daily_demand_m3,daily_mei_kwh_m3 for consumers.
void write_mei_daily_csv(std::ostream& out, const Network& net, const MEIReport& report, const DailyMEI& daily);

/// component,daily_mei_kwh_m3,cumulative_fraction: sorted consumer values of
/// the total and of each of its components.
void write_cdf_csv(std::ostream& out, const MEIReport& report, const DailyMEI& daily);

void write_summary_json(std::ostream& out, const RunSummary& summary);

}  // namespace mei
