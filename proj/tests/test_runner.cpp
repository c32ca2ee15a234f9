#include "mei/inp.hpp"
#include "mei/runner.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace mei;

namespace {

Network desk_net()
{
    return read_inp_file(std::string(MEI_DATA_DIR) + "/desk.inp");
}

ScenarioSpec desk_spec()
{
    return read_scenario_file(std::string(MEI_DATA_DIR) + "/desk_base.scn");
}

RunOptions all_on(const Network& net)
{
    RunOptions o;
    o.threads = 1;
    o.schedule = PumpSchedule(static_cast<int>(net.pumps.size()), kScheduleHours, true);
    return o;
}

std::vector<std::string> lines_of(const std::filesystem::path& p)
{
    std::ifstream f(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(f, line);)
        out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("summary agrees with the run it describes")
{
    const Network net = desk_net();
    const auto run = run_scenario(net, desk_spec(), all_on(net));
    const auto& s = run.summary;
    CHECK(!run.ga);
    CHECK(s.scenario == "base");
    CHECK(s.seed == 11);
    CHECK(s.total_energy_kwh == run.sim.total_energy());
    CHECK(s.closure.relative < 1e-9);
    CHECK(s.max_fraction_error < 1e-9);

    double e = 0.0;
    double vol = 0.0;
    for (int t = 0; t < run.mei.steps; ++t)
        for (Eigen::Index v = 0; v < run.mei.demand.cols(); ++v) {
            const double q = run.mei.demand(t, v) * run.mei.dt_hours[t];
            if (q > 0.0) {
                e += run.mei.mei(t, v) * q;
                vol += q;
            }
        }
    CHECK(std::abs(s.daily.system - e / vol) < 1e-12);

    double sum = 0.0;
    int n = 0;
    for (std::size_t j = 0; j < net.junctions.size(); ++j)
        if (net.junctions[j].base_demand > 0.0) {
            sum += run.daily.node[static_cast<Eigen::Index>(j)];
            ++n;
        }
    CHECK(s.daily.consumers == n);
    CHECK(std::abs(s.daily.mean - sum / n) < 1e-12);
    CHECK(s.daily.min <= s.daily.median);
    CHECK(s.daily.median <= s.daily.max);

    double share = 0.0;
    for (const auto& [id, f] : s.injected_fraction)
        share += f;
    CHECK(std::abs(share - 1.0) < 1e-12);
    double energy = 0.0;
    for (std::size_t t = 0; t < run.sim.states.size(); ++t)
        energy += s.pumping_load_kw[static_cast<Eigen::Index>(t)] * run.sim.states[t].dt_hours;
    CHECK(std::abs(energy - s.total_energy_kwh) < 1e-9);
    CHECK(s.tank_ei.size() == 2);
}

TEST_CASE("artifacts are written in their documented layout")
{
    const Network net = desk_net();
    const auto run = run_scenario(net, desk_spec(), all_on(net));
    const auto dir = std::filesystem::temp_directory_path() / "mei_runner_artifacts";
    std::filesystem::remove_all(dir);
    write_artifacts(run, dir);

    for (const char* f : {"schedule.txt", "hydraulics.csv", "mei_hourly.csv", "mei_daily.csv", "cdf.csv",
                          "summary.json"})
        CHECK(std::filesystem::exists(dir / f));
    CHECK(!std::filesystem::exists(dir / "fitness_history.csv"));

    const auto hourly = lines_of(dir / "mei_hourly.csv");
    REQUIRE(!hourly.empty());
    CHECK(hourly[0] == "time,node_id,mei_kwh_m3,mei_dist,mei_preinj,R1,R2,T1,T2");
    CHECK(static_cast<Eigen::Index>(hourly.size() - 1) == run.mei.mei.array().isFinite().count());

    CHECK(static_cast<int>(lines_of(dir / "mei_daily.csv").size()) == run.summary.daily.consumers + 1);
    const auto cdf = lines_of(dir / "cdf.csv");
    CHECK(static_cast<int>(cdf.size()) == 4 * run.summary.daily.consumers + 1);
    CHECK(cdf.back().substr(cdf.back().rfind(',') + 1) == "1");

    std::ifstream js(dir / "summary.json");
    const auto j = nlohmann::json::parse(js);
    CHECK(j["scenario"] == "base");
    CHECK(j["daily_mei"]["mean"].get<double>() == doctest::Approx(run.summary.daily.mean).epsilon(1e-12));
    CHECK(j["pumping_load_kw"].size() == run.sim.states.size());
    CHECK(j["energy_closure"]["relative_residual"].get<double>() < 1e-9);
    std::filesystem::remove_all(dir);
}

TEST_CASE("undefined values are null in the summary")
{
    RunSummary s;
    std::ostringstream out;
    write_summary_json(out, s);
    const auto j = nlohmann::json::parse(out.str());
    CHECK(j["daily_mei"]["mean"].is_null());
    CHECK(j["daily_mei"]["consumers"] == 0);
}

TEST_CASE("optimised runs are reproducible at any thread count")
{
    const Network net = desk_net();
    ScenarioSpec spec = desk_spec();
    spec.ga.population = 10;
    spec.ga.generations = 3;
    spec.ga.elites = 2;
    spec.ga.parent_pool = 5;
    RunOptions one;
    one.threads = 1;
    RunOptions three;
    three.threads = 3;
    const auto a = run_scenario(net, spec, one);
    const auto b = run_scenario(net, spec, three);
    REQUIRE(a.ga);
    CHECK(a.ga->history.size() == 3);
    CHECK(a.schedule == b.schedule);
    CHECK(a.fitness.total == b.fitness.total);
    CHECK(a.summary.daily.mean == b.summary.daily.mean);
    std::ostringstream ha;
    std::ostringstream hb;
    write_history_csv(ha, a.ga->history);
    write_history_csv(hb, b.ga->history);
    CHECK(ha.str() == hb.str());
}

TEST_CASE("failures name the stage")
{
    const Network net = desk_net();
    ScenarioSpec spec = desk_spec();
    spec.prices.prices.clear();
    try {
        run_scenario(net, spec, all_on(net));
        FAIL("expected a scenario error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "scenario");
        CHECK(std::string(e.what()).find("price") != std::string::npos);
    }

    RunOptions bad = all_on(net);
    bad.schedule = PumpSchedule(2);
    try {
        run_scenario(net, desk_spec(), bad);
        FAIL("expected a simulate error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "simulate");
        CHECK(std::string(e.what()).find("2 x 24") != std::string::npos);
    }
}

TEST_CASE("standard variants")
{
    const Network net = desk_net();
    const ScenarioSpec spec = desk_spec();
    const auto vars = standard_variants(net, spec);
    REQUIRE(vars.size() == 6);
    const char* names[] = {"D-", "D+", "R-", "R+", "R2-", "R2+"};
    for (std::size_t i = 0; i < vars.size(); ++i) {
        CHECK(vars[i].name == names[i]);
        CHECK(vars[i].spec.name == names[i]);
        CHECK(vars[i].spec.seed == variant_seed(spec.seed, names[i]));
        CHECK(vars[i].spec.seed != spec.seed);
    }
    CHECK(vars[0].spec.demand_multiplier == 0.75);
    CHECK(vars[1].spec.demand_multiplier == 1.25);
    CHECK(vars[2].spec.roughness_multiplier == 0.5);
    CHECK(vars[3].spec.roughness_multiplier == 1.5);
    CHECK(vars[5].spec.target_fractions.at("R2") == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(vars[5].spec.target_fractions.at("R1") == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(vars[4].spec.target_fractions.at("R2") == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(variant_seed(spec.seed, "R+") == variant_seed(spec.seed, "R+"));
    CHECK(variant_seed(spec.seed, "R+") != variant_seed(spec.seed + 1, "R+"));
}

TEST_CASE("price overlays become named variants")
{
    const ScenarioSpec spec = desk_spec();
    std::ifstream f(std::string(MEI_DATA_DIR) + "/desk_ep1.scn");
    std::stringstream text;
    text << f.rdbuf();
    const auto v = overlay_variant(spec, text.str());
    CHECK(v.name == "EP1");
    CHECK(v.spec.seed == variant_seed(spec.seed, "EP1"));
    REQUIRE(v.spec.prices.prices.size() == 24);
    CHECK(v.spec.prices.prices[17] == 0.125);
    CHECK(v.spec.target_fractions == spec.target_fractions);
    CHECK(v.spec.ga.population == spec.ga.population);

    CHECK_THROWS_AS(overlay_variant(spec, "[prices]\nid = x\n"), std::invalid_argument);
    CHECK(overlay_variant(spec, "[scenario]\nname = S\nseed = 5\n").spec.seed == 5);
}

TEST_CASE("sweeps isolate failing variants")
{
    const Network net = desk_net();
    const ScenarioSpec spec = desk_spec();
    const RunOptions opt = all_on(net);

    const auto alone = run_sweep(net, spec, {}, opt);
    CHECK(alone.variants.empty());
    std::ostringstream csv;
    write_comparison_csv(csv, alone);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);

    SweepVariant broken{"broken", spec};
    broken.spec.name = "broken";
    broken.spec.prices.prices.pop_back();
    SweepVariant lighter{"D-", spec};
    lighter.spec.name = "D-";
    lighter.spec.demand_multiplier = 0.75;
    const auto sw = run_sweep(net, spec, {broken, lighter}, opt);
    REQUIRE(sw.variants.size() == 2);
    CHECK(!sw.variants[0].run);
    CHECK(sw.variants[0].error.find("scenario:") == 0);
    REQUIRE(sw.variants[1].run);
    CHECK(sw.variants[1].run->summary.total_energy_kwh < sw.base.summary.total_energy_kwh);

    std::ostringstream out;
    write_comparison_csv(out, sw);
    std::istringstream in(out.str());
    std::string header;
    std::string base;
    std::string failed;
    std::string ok;
    std::getline(in, header);
    std::getline(in, base);
    std::getline(in, failed);
    std::getline(in, ok);
    CHECK(header.rfind("variant,seed,status,", 0) == 0);
    CHECK(base.rfind("base,11,ok,", 0) == 0);
    CHECK(failed.rfind("broken,11,failed,", 0) == 0);
    CHECK(ok.rfind("D-,11,ok,", 0) == 0);
}

TEST_CASE("perturbation")
{
    const Network net = desk_net();
    const auto base = run_scenario(net, desk_spec(), all_on(net));

    SUBCASE("zero level reproduces the base")
    {
        const auto r = run_perturbation(base, {3, {0.0}, 2}, 1);
        CHECK(r.failures.empty());
        CHECK(!r.rows.empty());
        for (const auto& row : r.rows)
            CHECK(row.delta == 0.0);
        CHECK(r.max_abs_pct_all[0][0] == 0.0);
    }
    SUBCASE("rows cover the perturbed consumers and replay exactly")
    {
        const PerturbationSpec spec{1, {0.1, 0.4}, 3};
        const auto a = run_perturbation(base, spec, 1);
        const auto b = run_perturbation(base, spec, 3);
        CHECK(a.failures.empty());
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].node_id == b.rows[i].node_id);
            CHECK(a.rows[i].perturbed_mei == b.rows[i].perturbed_mei);
        }
        REQUIRE(a.max_abs_pct.size() == 2);
        CHECK(a.max_abs_pct[1].size() == 3);
        std::map<int, std::set<std::string>> nodes_by_repeat;
        for (const auto& row : a.rows) {
            CHECK(row.delta == row.perturbed_mei - row.base_mei);
            CHECK(row.node_id.size() == 3);  // a service connection such as J4c
            nodes_by_repeat[row.repeat].insert(row.node_id);
        }
        // Each repeat perturbs the same consumer at every level.
        for (const auto& [rep, nodes] : nodes_by_repeat)
            CHECK(nodes.size() == 1);
        std::ostringstream csv;
        write_perturbation_csv(csv, a);
        const std::string text = csv.str();
        CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(a.rows.size()) + 1);
    }
    SUBCASE("asking for more consumers than exist fails")
    {
        CHECK_THROWS_AS(run_perturbation(base, {41, {0.1}, 1}, 1), std::invalid_argument);
    }
}
