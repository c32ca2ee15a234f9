#include "fixtures.hpp"

#include "mei/inp.hpp"
#include "mei/scenario.hpp"
#include "mei/units.hpp"

#include <doctest.h>

#include <cmath>

using namespace mei;

namespace {

const char* kBase = R"(
[scenario]
name = base
seed = 11
start_hour = 3

[prices]
0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.05, 0.05
0.05, 0.05, 0.05, 0.3, 0.3, 0.3, 0.3, 0.3, 0.2, 0.2, 0.1, 0.1

[sources]
A.ei_trans = 0.3
A.ei_treat = 0.1
A.target_fraction = 0.25
B.target_fraction = 0.25
C.target_fraction = 0.50

[ga]
population = 40
generations = 12
elites = 2
parent_pool = 20
)";

}  // namespace

TEST_CASE("scenario fields are echoed")
{
    const ScenarioSpec s = parse_scenario(kBase);
    CHECK(s.name == "base");
    CHECK(s.seed == 11);
    CHECK(s.start_hour == 3);
    CHECK(s.prices.prices.size() == 24);
    CHECK(s.target_fractions.at("A") == 0.25);
    CHECK(s.target_fractions.at("B") == 0.25);
    CHECK(s.target_fractions.at("C") == 0.50);
    CHECK(s.pre_injection_eis().at("A") == doctest::Approx(0.4));
    CHECK(s.ga.population == 40);
    CHECK(s.ga.rng_seed == 11);
}

TEST_CASE("empty scenario gives defaults")
{
    const ScenarioSpec s = parse_scenario("");
    CHECK(s == ScenarioSpec{});
    CHECK(s.demand_multiplier == 1.0);
    CHECK(s.ga.population == 500);
    CHECK_THROWS_AS(require_runnable(s), ParseError);
}

TEST_CASE("scenario errors")
{
    CHECK_THROWS_AS(parse_scenario("[sources]\nA.target_fraction = 0.3\nB.target_fraction = 0.3\n"
                                   "C.target_fraction = 0.3\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_scenario("[scenario]\nbogus = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("[prices]\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("[prices]\n1,2,3\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("[scenario]\ndemand_multiplier = 0\n"), ParseError);
}

TEST_CASE("overlay keeps base values")
{
    const ScenarioSpec base = parse_scenario(kBase);
    const ScenarioSpec v = parse_scenario("[scenario]\nname = rough\nroughness_multiplier = 1.5\n", base);
    CHECK(v.name == "rough");
    CHECK(v.roughness_multiplier == 1.5);
    CHECK(v.prices == base.prices);
    CHECK(v.ga == base.ga);
}

TEST_CASE("apply_scenario transforms and stays pure")
{
    Network net = fixtures::single_pipe(8.0);
    net.tanks.push_back(fixtures::tank("T", 30, 1, 0, 2, 3));
    net.pipes.push_back(fixtures::pipe("P2", "J", "T", 100, 0.2));
    const Network copy = net;

    ScenarioSpec id;
    CHECK(apply_scenario(net, id) == net);

    ScenarioSpec s;
    s.demand_multiplier = 1.25;
    s.roughness_multiplier = 1.5;
    s.start_hour = 7;
    s.elevation_offsets = {{"J", 9.14}, {"T", -2.0}};
    s.transmission_eis = {{"R", 0.2}};
    const Network out = apply_scenario(net, s);
    CHECK(net == copy);
    CHECK(apply_scenario(net, s) == out);
    CHECK(out.junctions[0].base_demand == doctest::Approx(10.0));
    CHECK(out.junctions[0].elevation == doctest::Approx(9.14));
    CHECK(out.tanks[0].elevation == doctest::Approx(28.0));
    CHECK(out.horizon_start_hour == 7);
    CHECK(out.reservoirs[0].transmission_ei == 0.2);
    const double h0 = hazen_williams_headloss(net.pipes[0].length, 0.05, net.pipes[0].diameter, net.pipes[0].roughness_coeff);
    const double h1 = hazen_williams_headloss(out.pipes[0].length, 0.05, out.pipes[0].diameter, out.pipes[0].roughness_coeff);
    CHECK(h1 / h0 == doctest::Approx(2.119).epsilon(0.005));

    ScenarioSpec bad;
    bad.elevation_offsets = {{"nope", 1.0}};
    CHECK_THROWS_AS(apply_scenario(net, bad), std::invalid_argument);
}
