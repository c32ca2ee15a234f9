#include "fixtures.hpp"
#include "oracles.hpp"

#include "mei/backtrack.hpp"
#include "mei/hydraulics.hpp"
#include "mei/units.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace mei;
using oracles::enumerate_paths;
using oracles::two_source_net;

namespace {

struct Edge {
    int from;
    int to;
    double flow;
    double h;
};

// Hand-built snapshot; injections are (source, rate) pairs.
FlowSnapshot make_snap(int nodes, std::vector<int> source_nodes, const std::vector<std::pair<int, double>>& inj,
                       const std::vector<Edge>& edges)
{
    FlowSnapshot s;
    s.node_count = nodes;
    s.source_node = std::move(source_nodes);
    s.inflow.setZero(nodes);
    s.withdrawal.setZero(nodes);
    s.injection.setZero(static_cast<int>(s.source_node.size()));
    for (const auto& e : edges) {
        s.edges.push_back({e.from, e.to, -1, e.flow, e.h, false});
        s.inflow[e.to] += e.flow;
    }
    for (const auto& [src, q] : inj) {
        s.injection[src] = q;
        s.inflow[s.source_node[static_cast<std::size_t>(src)]] += q;
        s.active_sources.push_back(src);
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(nodes);
    for (const auto& e : edges)
        out[e.from] += e.flow;
    s.withdrawal = (s.inflow - out).cwiseMax(0.0);
    return s;
}

double head_for(double mei)
{
    return mei * 3.6e6 / (kWaterDensity * kGravity);
}

}  // namespace

TEST_CASE("mixing 3 and 1 m3/h of pure water gives 0.75 / 0.25")
{
    // Nodes: 0 = junction, 1 = source A, 2 = source B.
    const auto s = make_snap(3, {1, 2}, {{0, 3.0}, {1, 1.0}}, {{1, 0, 3.0, 0.0}, {2, 0, 1.0, 0.0}});
    const auto r = solve_fractions(s);
    CHECK(r(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r(0, 1) == 1.0);
    CHECK(r(1, 2) == 1.0);
}

TEST_CASE("a chain keeps the single source fraction at one")
{
    const auto s = make_snap(3, {0}, {{0, 7.0}}, {{0, 1, 7.0, 5.0}, {1, 2, 4.0, 25.0}});
    const auto r = solve_fractions(s);
    CHECK(r(0, 1) == 1.0);
    CHECK(r(0, 2) == 1.0);
    const auto h = solve_head_accumulation(s, r);
    CHECK(h(0, 0) == 0.0);
    CHECK(h(0, 1) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(h(0, 2) == doctest::Approx(30.0).epsilon(1e-15));
}

TEST_CASE("converging equal paths average their heads")
{
    // 0 -> 1 -> 3 (10 m) and 0 -> 2 -> 3 (20 m).
    const auto s = make_snap(4, {0}, {{0, 8.0}},
                             {{0, 1, 4.0, 4.0}, {1, 3, 4.0, 6.0}, {0, 2, 4.0, 15.0}, {2, 3, 4.0, 5.0}});
    const auto h = solve_head_accumulation(s, solve_fractions(s));
    CHECK(h(0, 3) == doctest::Approx(15.0).epsilon(1e-15));
}

TEST_CASE("a pump edge carries gain over efficiency")
{
    Network net;
    net.reservoirs.push_back(fixtures::reservoir("R", 10.0));
    net.junctions.push_back(fixtures::junction("J", 0.0, 30.0));
    net.pumps.push_back(fixtures::pump("PU", "R", "J", 40.0, 20.0, 0.8));
    const NetworkIndex idx(net);
    HydraulicState st;
    st.link_flows = Eigen::VectorXd::Constant(1, 30.0);
    st.link_energy_head = Eigen::VectorXd::Constant(1, 20.0 / 0.8);
    st.junction_demands = Eigen::VectorXd::Constant(1, 30.0);
    st.reservoir_outflow = Eigen::VectorXd::Constant(1, 30.0);
    st.tank_net_inflow.resize(0);
    const auto snap = build_flow_snapshot(st, net);
    REQUIRE(snap.edges.size() == 1);
    CHECK(snap.edges[0].h == 25.0);
    CHECK(snap.edges[0].pump);

    st.link_flows[0] = 5e-7;
    CHECK(build_flow_snapshot(st, net).edges.empty());
}

TEST_CASE("a PRV edge carries its dissipated head")
{
    Network net = fixtures::single_pipe(40.0);
    PressureReducingValve v;
    v.id = "V";
    v.from_node = "J";
    v.to_node = "K";
    v.setting = 10.0;
    v.diameter = 0.3;
    net.valves.push_back(v);
    net.junctions.push_back(fixtures::junction("K", 0.0, 40.0));
    net.junctions[0].base_demand = 0.0;
    const NetworkIndex idx(net);
    Eigen::VectorXd d(2);
    d << 0.0, 40.0;
    const auto st = solve_timestep(net, d, {}, Eigen::VectorXd::Constant(1, 50.0));
    const auto snap = build_flow_snapshot(st, net);
    const int link = *idx.find_link("V");
    const double drop = st.node_heads[*idx.find_node("J")] - st.node_heads[*idx.find_node("K")];
    for (const auto& e : snap.edges)
        if (e.link == link) {
            CHECK(e.h == doctest::Approx(drop).epsilon(1e-12));
            CHECK(drop > 12.0);
        }
}

TEST_CASE("fractions and heads through a flow cycle")
{
    // A injects 10 at node 0, B injects 4 at node 3; 1 and 2 exchange water.
    const auto s = make_snap(4, {0, 3}, {{0, 10.0}, {1, 4.0}},
                             {{0, 1, 10.0, 2.0}, {1, 2, 15.0, 3.0}, {2, 1, 5.0, 1.0}, {3, 2, 4.0, 0.0}});
    const auto r = solve_fractions(s);
    CHECK(r(0, 1) == doctest::Approx(19.0 / 21.0).epsilon(1e-12));
    CHECK(r(0, 2) == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
    CHECK(r.col(2).sum() == doctest::Approx(1.0).epsilon(1e-12));
    const auto h = solve_head_accumulation(s, r);
    CHECK(h(0, 1) == doctest::Approx(24.0 / 7.0).epsilon(1e-12));
    CHECK(h(0, 2) == doctest::Approx(45.0 / 7.0).epsilon(1e-12));
    // B's water also circulates: H_B1 = 17/7, H_B2 = 10/7.
    CHECK(h(1, 1) == doctest::Approx(17.0 / 7.0).epsilon(1e-12));
    CHECK(h(1, 2) == doctest::Approx(10.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("a node sending water it never received is reported")
{
    FlowSnapshot s = make_snap(3, {0}, {{0, 5.0}}, {{0, 1, 5.0, 1.0}, {2, 1, 2.0, 1.0}});
    CHECK_THROWS_WITH_AS(solve_fractions(s), doctest::Contains("node index 2"), std::runtime_error);
}

TEST_CASE("tank charged from a reservoir through 36.697 m")
{
    // Nodes: 0 = junction, 1 = reservoir, 2 = tank. Step 0 charges, step 1 discharges.
    const auto charge = make_snap(3, {1, 2}, {{0, 10.0}}, {{1, 0, 10.0, head_for(0.1)}, {0, 2, 6.0, 0.0}});
    const auto discharge = make_snap(3, {1, 2}, {{1, 6.0}}, {{2, 0, 6.0, 0.0}});
    std::vector<FlowSnapshot> snaps{charge, discharge};
    std::vector<FractionMatrix> r;
    std::vector<HeadMatrix> h;
    for (const auto& s : snaps) {
        r.push_back(solve_fractions(s));
        h.push_back(solve_head_accumulation(s, r.back()));
    }
    const auto ts = resolve_tank_ei(snaps, r, h, {{0.4, 0.0, 0.0}});
    REQUIRE(ts.intensity.size() == 1);
    CHECK(ts.intensity[0].total() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ts.intensity[0].transmission == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(ts.volume[0] == 6.0);
    CHECK(ts.warnings.empty());

    // The rounded head quoted to four digits.
    auto h2 = h;
    h2[0](0, 2) = 36.697;
    CHECK(resolve_tank_ei(snaps, r, h2, {{0.4, 0.0, 0.0}}).intensity[0].total() == doctest::Approx(0.5).epsilon(1e-5));

    const auto rep = assemble_mei(snaps, r, h, {{0.4, 0.0, 0.0}, ts.intensity[0]});
    CHECK(rep.mei(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::isnan(rep.mei(1, 1)));
}

TEST_CASE("a tank that never charges gets zero and a warning")
{
    const auto s = make_snap(2, {0, 1}, {{1, 3.0}}, {{1, 0, 3.0, 2.0}});
    const auto r = solve_fractions(s);
    const auto ts = resolve_tank_ei({s}, {r}, {solve_head_accumulation(s, r)}, {{0.4, 0.1, 0.0}});
    CHECK(ts.intensity[0].total() == 0.0);
    REQUIRE(ts.warnings.size() == 1);
    CHECK(ts.warnings[0].find("never charges") != std::string::npos);
}

TEST_CASE("tank fed only by another tank resolves by back substitution")
{
    // Nodes: 0 = reservoir, 1 = tank A, 2 = tank B, 3 = junction.
    // Step 0: reservoir -> B through 0.1 kWh/m3; step 1: B -> A through 0.05.
    const auto s0 = make_snap(4, {0, 1, 2}, {{0, 8.0}}, {{0, 2, 8.0, head_for(0.1)}});
    const auto s1 = make_snap(4, {0, 1, 2}, {{2, 5.0}}, {{2, 1, 5.0, head_for(0.05)}});
    std::vector<FlowSnapshot> snaps{s0, s1};
    std::vector<FractionMatrix> r;
    std::vector<HeadMatrix> h;
    for (const auto& s : snaps) {
        r.push_back(solve_fractions(s));
        h.push_back(solve_head_accumulation(s, r.back()));
    }
    const auto ts = resolve_tank_ei(snaps, r, h, {{0.3, 0.1, 0.0}});
    const double x_b = 0.3 + 0.1 + 0.1;
    CHECK(ts.intensity[1].total() == doctest::Approx(x_b).epsilon(1e-12));
    CHECK(ts.intensity[0].total() == doctest::Approx(x_b + 0.05).epsilon(1e-12));
    CHECK(ts.intensity[0].treatment == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(ts.intensity[0].distribution == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("tanks feeding only each other are reported")
{
    const auto s0 = make_snap(3, {0, 1, 2}, {{2, 5.0}}, {{2, 1, 5.0, 1.0}});
    const auto s1 = make_snap(3, {0, 1, 2}, {{1, 5.0}}, {{1, 2, 5.0, 1.0}});
    std::vector<FlowSnapshot> snaps{s0, s1};
    std::vector<FractionMatrix> r;
    std::vector<HeadMatrix> h;
    for (const auto& s : snaps) {
        r.push_back(solve_fractions(s));
        h.push_back(solve_head_accumulation(s, r.back()));
    }
    CHECK_THROWS_WITH_AS(resolve_tank_ei(snaps, r, h, {{0.3, 0.1, 0.0}}), doctest::Contains("tanks 0, 1"),
                         std::runtime_error);
}

TEST_CASE("assembly arithmetic")
{
    // Nodes: 0 = consumer, 1 = source with EI 0.4, 2 = source with EI 0.11.
    const auto s = make_snap(3, {1, 2}, {{0, 2.0}, {1, 2.0}}, {{1, 0, 2.0, head_for(0.1)}, {2, 0, 2.0, head_for(0.2)}});
    const auto r = solve_fractions(s);
    const auto h = solve_head_accumulation(s, r);
    const auto rep = assemble_mei({s}, {r}, {h}, {{0.3, 0.1, 0.0}, {0.11, 0.0, 0.0}});
    CHECK(rep.mei(0, 0) == doctest::Approx(0.405).epsilon(1e-12));
    CHECK(rep.pre_injection(0, 0) == doctest::Approx(0.255).epsilon(1e-12));
    CHECK(rep.mei(0, 0) == doctest::Approx(rep.transmission(0, 0) + rep.treatment(0, 0) + rep.distribution(0, 0))
                               .epsilon(1e-14));

    const auto single = make_snap(2, {1}, {{0, 1.0}}, {{1, 0, 1.0, 0.0}});
    const auto r1 = solve_fractions(single);
    const auto rep1 = assemble_mei({single}, {r1}, {solve_head_accumulation(single, r1)}, {{1.0, 0.05, 0.0}});
    CHECK(rep1.mei(0, 0) == doctest::Approx(1.05).epsilon(1e-15));
}

TEST_CASE("daily averages weight by demand")
{
    MEIReport rep;
    rep.steps = 2;
    rep.mei.resize(2, 2);
    rep.mei << 1.0, kUndefined, 2.0, kUndefined;
    rep.demand.resize(2, 2);
    rep.demand << 3.0, 0.0, 1.0, 0.0;
    rep.dt_hours.setOnes(2);
    const auto d = daily_average_mei(rep);
    CHECK(d.node[0] == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(std::isnan(d.node[1]));
    CHECK(d.system == doctest::Approx(1.25).epsilon(1e-15));
    CHECK(d.volume[0] == 4.0);

    rep.mei.col(0).setConstant(0.7);
    CHECK(daily_average_mei(rep).node[0] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("two-source network matches path enumeration at every step")
{
    const Network net = two_source_net();
    REQUIRE(validate_network(net).empty());
    PumpSchedule sched(1, 24, true);
    for (int t = 9; t < 14; ++t)
        sched(0, t) = false;
    const auto sim = simulate_eps(net, sched);
    REQUIRE(sim.feasible);
    const auto rep = backtrack(net, sim);
    const NetworkIndex idx(net);
    bool saw_mix = false;
    for (int t = 0; t < 24; ++t) {
        const auto snap = build_flow_snapshot(sim.states[static_cast<std::size_t>(t)], net);
        const auto oracle = enumerate_paths(snap);
        const auto& r = rep.fractions[static_cast<std::size_t>(t)];
        const auto& h = rep.heads[static_cast<std::size_t>(t)];
        CHECK((r - oracle.r).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((h - oracle.h).cwiseAbs().maxCoeff() < 1e-9);
        for (int v = 0; v < idx.node_count(); ++v) {
            if (!(snap.inflow[v] > 0.0))
                continue;
            double m = 0.0;
            for (int i = 0; i < 2; ++i) {
                const auto& res = net.reservoirs[static_cast<std::size_t>(i)];
                if (oracle.r(i, v) > 0.0)
                    m += oracle.r(i, v) * (res.transmission_ei + res.treatment_ei + mei_dist(oracle.h(i, v)));
            }
            CHECK(std::abs(rep.mei(t, v) - m) < 1e-9);
            saw_mix = saw_mix || (oracle.r(0, v) > 0.01 && oracle.r(1, v) > 0.01);
        }
    }
    CHECK(saw_mix);
    CHECK(max_fraction_error(rep) < 1e-12);
}

TEST_CASE("energy balance closes on a run with a tank")
{
    const Network net = fixtures::pump_tank(40.0);
    PumpSchedule sched(1, 24, false);
    for (int t = 0; t < 24; ++t)
        sched(0, t) = t < 6 || (t >= 12 && t < 16);
    const auto sim = simulate_eps(net, sched);
    REQUIRE(sim.feasible);
    const auto rep = backtrack(net, sim);
    const auto c = energy_closure(rep, sim, net);
    CHECK(c.pump_energy > 0.0);
    CHECK(c.dissipation > 0.0);
    CHECK(c.tank_storage != 0.0);
    CHECK(c.relative < 1e-9);
    CHECK(c.consumption_gap == doctest::Approx(c.dissipation + c.tank_storage - c.absorbed).epsilon(1e-9));

    // Every MEI is at least the cheapest contributing pre-injection EI.
    for (int t = 0; t < rep.steps; ++t)
        for (int v = 0; v < static_cast<int>(rep.node_ids.size()); ++v)
            if (!std::isnan(rep.mei(t, v)))
                CHECK(rep.mei(t, v) >= std::min(0.3, rep.source_intensity[1].total()) - 1e-12);
}

TEST_CASE("gravity-fed single source reduces to EI plus path head")
{
    const Network net = [] {
        Network n = fixtures::single_pipe(80.0);
        n.reservoirs[0].transmission_ei = 0.2;
        n.reservoirs[0].treatment_ei = 0.05;
        return n;
    }();
    const auto sim = simulate_eps(net, PumpSchedule(0, 24));
    REQUIRE(sim.feasible);
    const auto rep = backtrack(net, sim);
    const double loss = 50.0 - sim.states[0].node_heads[0];
    CHECK(rep.mei(0, 0) == doctest::Approx(0.25 + mei_dist(loss)).epsilon(1e-12));
    CHECK(rep.fractions[0](0, 0) == 1.0);
    const auto c = energy_closure(rep, sim, net);
    CHECK(c.relative < 1e-12);
    CHECK(c.consumption_gap == doctest::Approx(c.dissipation).epsilon(1e-12));
}

TEST_CASE("a zero-demand horizon balances at zero")
{
    const Network net = fixtures::single_pipe(0.0);
    const auto sim = simulate_eps(net, PumpSchedule(0, 24));
    const auto rep = backtrack(net, sim);
    const auto c = energy_closure(rep, sim, net);
    CHECK(c.delivered == 0.0);
    CHECK(c.pump_energy == 0.0);
    CHECK(c.residual == 0.0);
    CHECK(std::isnan(rep.mei(0, 0)));
    CHECK(std::isnan(daily_average_mei(rep).system));
}
