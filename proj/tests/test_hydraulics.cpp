#include "fixtures.hpp"

#include "mei/hydraulics.hpp"
#include "mei/units.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mei;

namespace {

HydraulicState solve_with(const Network& net, const Eigen::VectorXd& demands, std::vector<bool> pumps = {})
{
    const NetworkIndex idx(net);
    Eigen::VectorXd heads(idx.reservoir_count() + idx.tank_count());
    for (int r = 0; r < idx.reservoir_count(); ++r)
        heads[r] = net.reservoirs[static_cast<std::size_t>(r)].head;
    for (int t = 0; t < idx.tank_count(); ++t)
        heads[idx.reservoir_count() + t] = net.tanks[static_cast<std::size_t>(t)].elevation +
                                           net.tanks[static_cast<std::size_t>(t)].init_level;
    if (pumps.empty())
        pumps.assign(static_cast<std::size_t>(idx.pump_count()), true);
    return solve_timestep(net, demands, pumps, heads);
}

}  // namespace

TEST_CASE("single pipe matches the closed form")
{
    for (double q : {0.5, 36.0, 360.0, 900.0}) {
        const Network net = fixtures::single_pipe(q);
        const auto st = solve_with(net, Eigen::VectorXd::Constant(1, q));
        const double expected = 50.0 - hazen_williams_headloss(1000.0, q / 3600.0, 0.3, 100.0);
        CHECK(std::abs(st.node_heads[0] - expected) < 1e-9);
        CHECK(std::abs(st.link_flows[0] - q) < 1e-9);
    }
}

TEST_CASE("zero demand gives hydrostatic heads")
{
    Network net = fixtures::pump_tank();
    const auto st = solve_with(net, Eigen::VectorXd::Zero(2), {false});
    CHECK(st.link_flows.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(st.node_heads[0] == doctest::Approx(35.0).epsilon(1e-12));
    CHECK(st.node_heads[1] == doctest::Approx(35.0).epsilon(1e-12));
    CHECK(st.pumps[0].power_kw == 0.0);
}

TEST_CASE("parallel identical pipes split evenly")
{
    Network net = fixtures::single_pipe(100.0);
    net.pipes.push_back(fixtures::pipe("P2", "R", "J", 1000.0, 0.3, 100.0));
    const auto st = solve_with(net, Eigen::VectorXd::Constant(1, 100.0));
    CHECK(st.link_flows[0] == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(st.link_flows[1] == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("converged states meet residual tolerances")
{
    const Network net = fixtures::pump_tank();
    const auto st = solve_with(net, Eigen::Vector2d(0.0, 70.0));
    CHECK(max_mass_residual(net, st) < 1e-6);
    CHECK(max_head_residual(net, st) < 1e-6);
    CHECK(st.pumps[0].running);
    CHECK(st.pumps[0].head_gain > 0.0);
    // Head rises only across the pump and falls along flowing pipes.
    CHECK(st.node_heads[0] > 10.0);
    for (int l = 0; l < 2; ++l)
        if (std::abs(st.link_flows[l]) > 1e-6)
            CHECK(st.link_headloss[l] * st.link_flows[l] > 0.0);
}

TEST_CASE("check valve blocks reverse flow and off pumps are closed")
{
    Network net = fixtures::single_pipe(0.0);
    net.reservoirs.push_back(fixtures::reservoir("R2", 80.0));
    net.pipes.push_back(fixtures::pipe("P2", "J", "R2", 100.0, 0.2));
    net.pipes.back().has_check_valve = true;
    auto st = solve_with(net, Eigen::VectorXd::Constant(1, 10.0));
    CHECK(st.link_flows[1] == 0.0);
    CHECK(st.link_states[1] == LinkState::closed);
    CHECK(st.link_flows[0] == doctest::Approx(10.0));

    Network p = fixtures::pump_tank();
    st = solve_with(p, Eigen::Vector2d(0.0, 30.0), {false});
    CHECK(st.link_flows[2] == 0.0);
    CHECK(st.link_states[2] == LinkState::closed);
    CHECK(st.tank_net_inflow[0] == doctest::Approx(-30.0));
}

TEST_CASE("active PRV holds its downstream pressure")
{
    Network net = fixtures::single_pipe(0.0);
    net.junctions.push_back(fixtures::junction("K", 5.0, 40.0));
    PressureReducingValve v;
    v.id = "V";
    v.from_node = "J";
    v.to_node = "K";
    v.setting = 20.0;
    v.diameter = 0.2;
    net.valves.push_back(v);
    auto st = solve_with(net, Eigen::Vector2d(0.0, 40.0));
    CHECK(st.link_states[1] == LinkState::active);
    CHECK(st.node_heads[1] == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(st.link_energy_head[1] == doctest::Approx(st.node_heads[0] - 25.0).epsilon(1e-12));
    CHECK(max_head_residual(net, st) < 1e-6);

    // Upstream head below the setting: valve opens fully.
    net.valves[0].setting = 60.0;
    st = solve_with(net, Eigen::Vector2d(0.0, 40.0));
    CHECK(st.link_states[1] == LinkState::open);
    CHECK(st.node_heads[1] < 50.0);
    CHECK(max_head_residual(net, st) < 1e-6);
}

TEST_CASE("disconnected demanded junction names the node")
{
    Network net = fixtures::pump_tank();
    net.pipes[0].initial_status = LinkStatus::closed;
    try {
        solve_with(net, Eigen::Vector2d(0.0, 30.0), {false});
        FAIL("expected failure");
    } catch (const SolveError& e) {
        CHECK(std::string(e.what()).find("J2") != std::string::npos);
    }
}

TEST_CASE("implicit tank update")
{
    const Eigen::VectorXd area = Eigen::VectorXd::Constant(1, 5.0);
    const Eigen::VectorXd l0 = Eigen::VectorXd::Constant(1, 3.0);
    auto constant = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 10.0); };
    CHECK(implicit_tank_levels(l0, 1.0, area, constant)[0] == doctest::Approx(5.0).epsilon(1e-15));
    auto zero = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
    CHECK(implicit_tank_levels(l0, 1.0, area, zero)[0] == 3.0);
    // Level-dependent inflow: backward Euler fixed point of L = 3 + (20 - 4 L) / 5.
    auto linear = [](const Eigen::VectorXd& l) { return Eigen::VectorXd::Constant(1, 20.0 - 4.0 * l[0]); };
    CHECK(implicit_tank_levels(l0, 1.0, area, linear)[0] == doctest::Approx(35.0 / 9.0).epsilon(1e-7));
    auto wild = [](const Eigen::VectorXd& l) { return Eigen::VectorXd::Constant(1, std::sin(1e3 * l[0]) * 1e4); };
    CHECK_THROWS_AS(implicit_tank_levels(l0, 1.0, area, wild, 1e-6, 5), SolveError);
}

TEST_CASE("tank filling to max is clamped")
{
    Network net = fixtures::pump_tank(0.0);
    net.tanks[0].init_level = 9.5;
    PumpSchedule s(1, 24, true);
    const auto res = simulate_eps(net, s);
    REQUIRE(res.feasible);
    CHECK(res.states[0].substeps >= 2);
    CHECK(res.states[0].tank_levels[0] == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(std::abs(res.states[1].tank_levels[0] - 10.0) < 1e-6);
    CHECK(res.states[1].link_flows[0] == doctest::Approx(0.0));
    // Mass consistency of the averaged step.
    const double area = net.tanks[0].area();
    CHECK((res.states[0].tank_levels[0] - 9.5) * area == doctest::Approx(res.states[0].tank_net_inflow[0]).epsilon(1e-9));
}

TEST_CASE("gravity-fed horizon uses no energy")
{
    Network net = fixtures::single_pipe(20.0);
    const auto res = simulate_eps(net, PumpSchedule(0));
    REQUIRE(res.feasible);
    CHECK(res.states.size() == 24);
    CHECK(res.energy_per_step.cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.injected_volume[0] == doctest::Approx(480.0).epsilon(1e-9));
}

TEST_CASE("step energy equals integrated pump power")
{
    const Network net = fixtures::pump_tank();
    PumpSchedule s(1);
    for (int h = 0; h < 24; ++h)
        s(0, h) = h < 6 || (h >= 12 && h < 15);
    const auto res = simulate_eps(net, s);
    REQUIRE(res.feasible);
    double total = 0.0;
    for (const auto& st : res.states) {
        const auto& pp = st.pumps[0];
        const double e = pp.running ? kWaterDensity * kGravity * (pp.flow / 3600.0) * pp.head_gain / pp.efficiency / 1000.0 * st.dt_hours : 0.0;
        CHECK(st.pump_energy_kwh == doctest::Approx(e).epsilon(1e-9));
        total += e;
        CHECK(max_mass_residual(net, st) < 1e-6);
        if (st.substeps == 1)
            CHECK(max_head_residual(net, st) < 1e-6);
    }
    CHECK(std::abs(res.total_energy() - total) <= 1e-9 * total);
}

TEST_CASE("tank starved below its minimum makes the run infeasible")
{
    // Tank is the only source of J2 once the pump stops.
    Network net = fixtures::pump_tank(120.0);
    PumpSchedule s(1);
    const auto res = simulate_eps(net, s);
    CHECK_FALSE(res.feasible);
    CHECK(res.infeasibility_reason.find("T") != std::string::npos);
    CHECK(res.infeasibility_reason.find("step") != std::string::npos);
}

TEST_CASE("schedule dimensions are checked")
{
    const Network net = fixtures::pump_tank();
    CHECK_THROWS_AS(simulate_eps(net, PumpSchedule(2)), std::invalid_argument);
    CHECK_THROWS_AS(simulate_eps(net, PumpSchedule(1, 12)), std::invalid_argument);
}

TEST_CASE("simulation is deterministic and refines consistently")
{
    const Network net = fixtures::pump_tank();
    PumpSchedule s(1);
    for (int h = 0; h < 24; ++h)
        s(0, h) = h % 3 != 0;
    const auto a = simulate_eps(net, s);
    const auto b = simulate_eps(net, s);
    REQUIRE(a.feasible);
    CHECK((a.energy_per_step.array() == b.energy_per_step.array()).all());
    CHECK((a.final_tank_levels.array() == b.final_tank_levels.array()).all());

    SolverOptions half;
    half.dt_hours = 0.5;
    const auto c = simulate_eps(net, s, half);
    REQUIRE(c.feasible);
    CHECK(c.states.size() == 48);
    const double rel = std::abs(c.final_tank_levels[0] - a.final_tank_levels[0]) / a.final_tank_levels[0];
    CHECK(rel < 0.01);

    std::ostringstream csv;
    write_state_csv(csv, net, a);
    CHECK(csv.str().rfind("time,element_id,kind,flow_m3h,head_m,level_m,eff,power_kW\n", 0) == 0);
}

TEST_CASE("dead-end branches carry their subtree demand")
{
    using fixtures::junction;
    using fixtures::pipe;
    Network net;
    net.reservoirs.push_back(fixtures::reservoir("R", 60.0));
    net.junctions = {junction("A", 10.0, 20.0), junction("B", 12.0, 10.0), junction("B1", 14.0, 15.0),
                     junction("B2", 9.0, 25.0), junction("C", 11.0, 0.0)};
    net.pipes = {pipe("RA", "R", "A", 800.0, 0.3), pipe("AB", "A", "B", 500.0, 0.25),
                 pipe("AB2", "B", "A", 700.0, 0.2), pipe("BB1", "B", "B1", 200.0, 0.15),
                 pipe("B2B1", "B2", "B1", 150.0, 0.1), pipe("AC", "A", "C", 100.0, 0.1)};
    Eigen::VectorXd d(5);
    for (int j = 0; j < 5; ++j)
        d[j] = net.junctions[static_cast<std::size_t>(j)].base_demand;
    const auto st = solve_with(net, d);
    CHECK(max_mass_residual(net, st) < 1e-6);
    CHECK(max_head_residual(net, st) < 1e-6);
    CHECK(st.link_flows[3] == 40.0);
    CHECK(st.link_flows[4] == -25.0);
    CHECK(st.link_flows[5] == 0.0);
    const double h_b1 = st.node_heads[1] - hazen_williams_headloss(200.0, 40.0 / 3600.0, 0.15, 100.0);
    const double h_b2 = h_b1 - hazen_williams_headloss(150.0, 25.0 / 3600.0, 0.1, 100.0);
    CHECK(std::abs(st.node_heads[2] - h_b1) < 1e-9);
    CHECK(std::abs(st.node_heads[3] - h_b2) < 1e-9);
    CHECK(st.node_heads[4] == st.node_heads[0]);
}

TEST_CASE("a sourceless branch is isolated")
{
    Network net = fixtures::single_pipe(10.0);
    net.junctions.push_back(fixtures::junction("X", 7.0, 0.0));
    net.junctions.push_back(fixtures::junction("Y", 8.0, 0.0));
    net.pipes.push_back(fixtures::pipe("XY", "X", "Y", 100.0, 0.1));
    const auto st = solve_with(net, Eigen::Vector3d(10.0, 0.0, 0.0));
    CHECK(st.node_heads[1] == 7.0);
    CHECK(st.node_heads[2] == 8.0);
    CHECK(st.link_flows[1] == 0.0);
    CHECK_THROWS_WITH_AS(solve_with(net, Eigen::Vector3d(10.0, 0.0, 1.0)), doctest::Contains("junction Y"),
                         SolveError);
}
