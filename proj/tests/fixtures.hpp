#pragma once

// Small programmatic networks shared by the unit tests.

#include "mei/network.hpp"

#include <string>
#include <vector>

namespace fixtures {

inline mei::Junction junction(std::string id, double elevation, double demand, std::string pattern = {})
{
    mei::Junction j;
    j.id = std::move(id);
    j.elevation = elevation;
    j.base_demand = demand;
    j.pattern_id = std::move(pattern);
    return j;
}

inline mei::InjectionPoint reservoir(std::string id, double head, double ei_trans = 0.0, double ei_treat = 0.0,
                                     double fraction = 1.0)
{
    mei::InjectionPoint r;
    r.id = std::move(id);
    r.head = head;
    r.transmission_ei = ei_trans;
    r.treatment_ei = ei_treat;
    r.target_fraction = fraction;
    return r;
}

inline mei::Pipe pipe(std::string id, std::string from, std::string to, double length, double diameter,
                      double c = 100.0)
{
    mei::Pipe p;
    p.id = std::move(id);
    p.from_node = std::move(from);
    p.to_node = std::move(to);
    p.length = length;
    p.diameter = diameter;
    p.roughness_coeff = c;
    return p;
}

inline mei::Tank tank(std::string id, double elevation, double init, double lo, double hi, double diameter)
{
    mei::Tank t;
    t.id = std::move(id);
    t.elevation = elevation;
    t.init_level = init;
    t.min_level = lo;
    t.max_level = hi;
    t.diameter = diameter;
    return t;
}

inline mei::Pump pump(std::string id, std::string from, std::string to, double bep_flow, double bep_head,
                      double efficiency = 0.75)
{
    mei::Pump p;
    p.id = std::move(id);
    p.from_node = std::move(from);
    p.to_node = std::move(to);
    const auto curves = mei::reconstruct_pump_curves(bep_flow, bep_head, efficiency);
    p.hq_curve = curves.head;
    p.eff_curve = curves.efficiency;
    p.bep = Eigen::Vector2d(bep_flow, bep_head);
    p.bep_efficiency = efficiency;
    return p;
}

inline mei::Pattern flat_pattern(std::string id = "1")
{
    return mei::Pattern{std::move(id), std::vector<double>(24, 1.0)};
}

/// Reservoir R (head 50 m) feeding junction J through one pipe.
inline mei::Network single_pipe(double demand, double length = 1000.0, double diameter = 0.3, double c = 100.0)
{
    mei::Network net;
    net.reservoirs.push_back(reservoir("R", 50.0));
    net.junctions.push_back(junction("J", 0.0, demand));
    net.pipes.push_back(pipe("P", "R", "J", length, diameter, c));
    return net;
}

}  // namespace fixtures

namespace fixtures {

/// Reservoir R (head 10 m) lifted by pump PU into J1; J1 feeds tank T
/// (bottom 30 m) and consumer J2.
inline mei::Network pump_tank(double demand = 50.0)
{
    mei::Network net;
    net.reservoirs.push_back(reservoir("R", 10.0, 0.2, 0.1));
    net.junctions.push_back(junction("J1", 0.0, 0.0));
    net.junctions.push_back(junction("J2", 5.0, demand, "d"));
    net.tanks.push_back(tank("T", 30.0, 5.0, 0.5, 10.0, 15.0));
    net.pipes.push_back(pipe("P1", "J1", "T", 200.0, 0.3, 120.0));
    net.pipes.push_back(pipe("P2", "J1", "J2", 500.0, 0.25, 110.0));
    net.pumps.push_back(pump("PU", "R", "J1", 120.0, 40.0));
    std::vector<double> m(24, 1.0);
    for (int h = 0; h < 24; ++h)
        m[static_cast<std::size_t>(h)] = 0.6 + 0.8 * (h >= 7 && h <= 21 ? 1.0 : 0.0);
    net.patterns.push_back({"d", m});
    return net;
}

}  // namespace fixtures
