#include "mei/report.hpp"

#include "text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mei {

using detail::format_double;

Eigen::VectorXd daily_weighted(const MEIReport& report, const Eigen::MatrixXd& component)
{
    const auto n = report.demand.cols();
    Eigen::VectorXd out = Eigen::VectorXd::Constant(n, kUndefined);
    for (Eigen::Index v = 0; v < n; ++v) {
        double e = 0.0;
        double vol = 0.0;
        for (int s = 0; s < report.steps; ++s) {
            const double q = report.demand(s, v) * report.dt_hours[s];
            if (q > 0.0) {
                e += component(s, v) * q;
                vol += q;
            }
        }
        if (vol > 0.0)
            out[v] = e / vol;
    }
    return out;
}

std::vector<int> consumer_nodes(const DailyMEI& daily)
{
    std::vector<int> out;
    for (Eigen::Index v = 0; v < daily.volume.size(); ++v)
        if (daily.volume[v] > 0.0)
            out.push_back(static_cast<int>(v));
    return out;
}

DailyStats daily_stats(const DailyMEI& daily)
{
    DailyStats st;
    std::vector<double> vals;
    for (int v : consumer_nodes(daily))
        if (std::isfinite(daily.node[v]))
            vals.push_back(daily.node[v]);
    st.consumers = static_cast<int>(vals.size());
    st.system = daily.system;
    if (vals.empty())
        return st;
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (double x : vals)
        sum += x;
    st.mean = sum / static_cast<double>(vals.size());
    st.min = vals.front();
    st.max = vals.back();
    const std::size_t m = vals.size() / 2;
    st.median = vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
    return st;
}

namespace {

double system_weighted(const MEIReport& report, const Eigen::MatrixXd& component)
{
    double e = 0.0;
    double vol = 0.0;
    for (int s = 0; s < report.steps; ++s)
        for (Eigen::Index v = 0; v < report.demand.cols(); ++v) {
            const double q = report.demand(s, v) * report.dt_hours[s];
            if (q > 0.0) {
                e += component(s, v) * q;
                vol += q;
            }
        }
    return vol > 0.0 ? e / vol : kUndefined;
}

// JSON has no NaN; undefined values become null.
nlohmann::json num(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

RunSummary summarize(const std::string& scenario, std::uint64_t seed, const Network& net,
                     const SimulationResult& sim, const MEIReport& report, const FitnessBreakdown& fitness)
{
    RunSummary s;
    s.scenario = scenario;
    s.seed = seed;
    s.fitness = fitness;
    const DailyMEI daily = daily_average_mei(report);
    s.daily = daily_stats(daily);
    s.daily_transmission = system_weighted(report, report.transmission);
    s.daily_treatment = system_weighted(report, report.treatment);
    s.daily_distribution = system_weighted(report, report.distribution);

    const Eigen::VectorXd share = supply_fractions(sim);
    for (std::size_t r = 0; r < net.reservoirs.size(); ++r) {
        s.injected_fraction[net.reservoirs[r].id] = share[static_cast<Eigen::Index>(r)];
        s.injected_volume[net.reservoirs[r].id] = sim.injected_volume[static_cast<Eigen::Index>(r)];
    }
    s.pumping_load_kw.resize(static_cast<Eigen::Index>(sim.states.size()));
    for (std::size_t t = 0; t < sim.states.size(); ++t)
        s.pumping_load_kw[static_cast<Eigen::Index>(t)] =
            sim.energy_per_step[static_cast<Eigen::Index>(t)] / sim.states[t].dt_hours;
    s.total_energy_kwh = sim.total_energy();
    s.closure = energy_closure(report, sim, net);
    s.max_fraction_error = max_fraction_error(report);
    for (std::size_t t = 0; t < net.tanks.size(); ++t)
        s.tank_ei[net.tanks[t].id] = report.tanks.intensity[t].total();
    s.warnings = sim.warnings;
    s.warnings.insert(s.warnings.end(), report.warnings.begin(), report.warnings.end());
    return s;
}

void write_mei_hourly_csv(std::ostream& out, const MEIReport& report)
{
    out << "time,node_id,mei_kwh_m3,mei_dist,mei_preinj";
    for (const auto& id : report.source_ids)
        out << ',' << id;
    out << '\n';
    double t = 0.0;
    for (int s = 0; s < report.steps; ++s) {
        const auto& r = report.fractions[static_cast<std::size_t>(s)];
        for (Eigen::Index v = 0; v < report.mei.cols(); ++v) {
            if (!std::isfinite(report.mei(s, v)))
                continue;
            out << format_double(t) << ',' << report.node_ids[static_cast<std::size_t>(v)] << ','
                << format_double(report.mei(s, v)) << ',' << format_double(report.distribution(s, v)) << ','
                << format_double(report.pre_injection(s, v));
            for (Eigen::Index i = 0; i < r.rows(); ++i)
                out << ',' << format_double(r(i, v));
            out << '\n';
        }
        t += report.dt_hours[s];
    }
}

void write_mei_daily_csv(std::ostream& out, const Network& net, const MEIReport& report, const DailyMEI& daily)
{
    const NetworkIndex idx(net);
    out << "node_id,elevation_m,daily_demand_m3,daily_mei_kwh_m3\n";
    for (int v : consumer_nodes(daily))
        out << report.node_ids[static_cast<std::size_t>(v)] << ',' << format_double(idx.node_elevation(v)) << ','
            << format_double(daily.volume[v]) << ',' << format_double(daily.node[v]) << '\n';
}

void write_cdf_csv(std::ostream& out, const MEIReport& report, const DailyMEI& daily)
{
    out << "component,daily_mei_kwh_m3,cumulative_fraction\n";
    const std::vector<int> consumers = consumer_nodes(daily);
    const std::pair<const char*, Eigen::VectorXd> parts[] = {
        {"total", daily.node},
        {"transmission", daily_weighted(report, report.transmission)},
        {"treatment", daily_weighted(report, report.treatment)},
        {"distribution", daily_weighted(report, report.distribution)},
    };
    for (const auto& [name, values] : parts) {
        std::vector<double> v;
        for (int n : consumers)
            if (std::isfinite(values[n]))
                v.push_back(values[n]);
        std::sort(v.begin(), v.end());
        for (std::size_t i = 0; i < v.size(); ++i)
            out << name << ',' << format_double(v[i]) << ','
                << format_double(static_cast<double>(i + 1) / static_cast<double>(v.size())) << '\n';
    }
}

void write_summary_json(std::ostream& out, const RunSummary& s)
{
    nlohmann::ordered_json j;
    j["scenario"] = s.scenario;
    j["seed"] = s.seed;
    j["fitness"] = {{"total", s.fitness.total},       {"c_elec", s.fitness.c_elec},
                    {"p_tank", s.fitness.p_tank},     {"p_pressure", s.fitness.p_pressure},
                    {"p_fraction", s.fitness.p_fraction}, {"energy_kwh", s.fitness.energy_kwh},
                    {"cost", s.fitness.cost}};
    j["daily_mei"] = {{"consumers", s.daily.consumers}, {"mean", num(s.daily.mean)},
                      {"min", num(s.daily.min)},        {"median", num(s.daily.median)},
                      {"max", num(s.daily.max)},        {"system", num(s.daily.system)},
                      {"transmission", num(s.daily_transmission)},
                      {"treatment", num(s.daily_treatment)},
                      {"distribution", num(s.daily_distribution)}};
    j["injected_fraction"] = s.injected_fraction;
    j["injected_volume_m3"] = s.injected_volume;
    j["pumping_load_kw"] = std::vector<double>(s.pumping_load_kw.begin(), s.pumping_load_kw.end());
    j["total_energy_kwh"] = s.total_energy_kwh;
    const auto& c = s.closure;
    j["energy_closure"] = {{"delivered_kwh", c.delivered},       {"pump_kwh", c.pump_energy},
                           {"dissipation_kwh", c.dissipation},   {"pre_injection_kwh", c.pre_injection},
                           {"tank_storage_kwh", c.tank_storage}, {"absorbed_kwh", c.absorbed},
                           {"residual_kwh", c.residual},         {"relative_residual", c.relative},
                           {"consumption_gap_kwh", c.consumption_gap}};
    j["max_fraction_error"] = s.max_fraction_error;
    nlohmann::ordered_json tanks = nlohmann::ordered_json::object();
    for (const auto& [id, ei] : s.tank_ei)
        tanks[id] = num(ei);
    j["tank_ei_kwh_m3"] = tanks;
    j["warnings"] = s.warnings;
    out << j.dump(2) << '\n';
}

}  // namespace mei
