// mei: command-line front end for the MEI pipeline.
//
// Exit codes: 0 success, 1 invalid input (parse errors, validation
// violations, schedule/network mismatch), 2 runtime failure or bad usage.

#include "mei/bep.hpp"
#include "mei/inp.hpp"
#include "mei/runner.hpp"
#include "mei/schedule.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace mei;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

// Bad input found before any computation.
class InvalidInput : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Args {
    std::string network;
    std::string scenario;
    std::string schedule;
    std::string out = "runs";
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::optional<int> generations;
    std::optional<int> population;
    std::vector<std::string> overlays;
    bool verbose = false;
};

template <class Fn>
auto input(Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ParseError& e) {
        throw InvalidInput(e.what());
    } catch (const std::invalid_argument& e) {
        throw InvalidInput(e.what());
    }
}

Network load_network(const Args& a)
{
    return input([&] {
        std::vector<std::string> warnings;
        Network net = read_inp_file(a.network, &warnings);
        for (const auto& w : warnings)
            std::cerr << "warning: " << w << '\n';
        const auto violations = validate_network(net);
        if (!violations.empty()) {
            for (const auto& v : violations)
                std::cerr << v.element << ": " << v.rule << '\n';
            throw InvalidInput(std::to_string(violations.size()) + " network violation(s)");
        }
        return net;
    });
}

ScenarioSpec load_scenario(const Args& a, bool runnable)
{
    return input([&] {
        ScenarioSpec s = a.scenario.empty() ? ScenarioSpec{} : read_scenario_file(a.scenario);
        if (a.scenario.empty())
            s.name = std::filesystem::path(a.network).stem().string();
        if (a.seed)
            s.seed = *a.seed;
        if (a.generations)
            s.ga.generations = *a.generations;
        if (a.population)
            s.ga.population = *a.population;
        if (runnable)
            require_runnable(s);
        return s;
    });
}

std::optional<PumpSchedule> load_schedule(const Args& a, const Network& net)
{
    if (a.schedule.empty())
        return std::nullopt;
    return input([&] { return read_schedule_file(a.schedule, static_cast<int>(net.pumps.size()), net.horizon_steps); });
}

RunOptions run_options(const Args& a, const Network& net)
{
    RunOptions o;
    o.threads = a.threads;
    o.schedule = load_schedule(a, net);
    if (a.verbose)
        o.on_generation = [](const GenerationStats& g) {
            std::cerr << "generation " << g.generation << " best " << g.best << " mean " << g.mean << '\n';
        };
    return o;
}

std::ofstream open_out(const std::filesystem::path& p)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f)
        throw std::runtime_error("cannot write " + p.string());
    return f;
}

void report(const RunArtifacts& run, const std::filesystem::path& dir)
{
    const auto& d = run.summary.daily;
    std::cerr << run.name << ": c_elec " << run.fitness.c_elec << ", mean daily MEI " << d.mean << " kWh/m3 over "
              << d.consumers << " consumers -> " << dir.string() << '\n';
}

int cmd_validate(const Args& a)
{
    load_network(a);
    if (!a.scenario.empty()) {
        const ScenarioSpec s = load_scenario(a, true);
        input([&] { apply_scenario(read_inp_file(a.network), s); });
    }
    return kOk;
}

int cmd_simulate(const Args& a)
{
    const Network base = load_network(a);
    const ScenarioSpec spec = load_scenario(a, false);
    const Network net = input([&] { return apply_scenario(base, spec); });
    const auto schedule = load_schedule(a, net);
    if (!schedule)
        throw InvalidInput("simulate needs --schedule");
    const SimulationResult sim = simulate_eps(net, *schedule);
    const auto dir = std::filesystem::path(a.out) / spec.name;
    {
        auto f = open_out(dir / "schedule.txt");
        f << format_schedule(*schedule);
    }
    {
        auto f = open_out(dir / "hydraulics.csv");
        write_state_csv(f, net, sim);
    }
    for (const auto& w : sim.warnings)
        std::cerr << "warning: " << w << '\n';
    if (!sim.feasible)
        throw std::runtime_error("schedule is infeasible: " + sim.infeasibility_reason);
    std::cerr << spec.name << ": " << sim.total_energy() << " kWh -> " << dir.string() << '\n';
    return kOk;
}

int cmd_optimize(const Args& a)
{
    const Network net = load_network(a);
    const ScenarioSpec spec = load_scenario(a, true);
    RunOptions opt = run_options(a, net);
    opt.schedule.reset();
    const RunArtifacts run = run_scenario(net, spec, opt);
    const auto dir = std::filesystem::path(a.out) / run.name;
    {
        auto f = open_out(dir / "schedule.txt");
        f << format_schedule(run.schedule);
    }
    {
        auto f = open_out(dir / "fitness_history.csv");
        write_history_csv(f, run.ga->history);
    }
    report(run, dir);
    return kOk;
}

int cmd_mei(const Args& a)
{
    const Network net = load_network(a);
    const ScenarioSpec spec = load_scenario(a, true);
    const RunArtifacts run = run_scenario(net, spec, run_options(a, net));
    const auto dir = std::filesystem::path(a.out) / run.name;
    write_artifacts(run, dir);
    report(run, dir);
    return kOk;
}

int cmd_sweep(const Args& a)
{
    const Network net = load_network(a);
    const ScenarioSpec spec = load_scenario(a, true);
    std::vector<SweepVariant> variants = input([&] { return standard_variants(net, spec); });
    for (const auto& path : a.overlays)
        variants.push_back(input([&] {
            std::ifstream f(path);
            if (!f)
                throw std::invalid_argument("cannot open overlay " + path);
            std::stringstream text;
            text << f.rdbuf();
            return overlay_variant(spec, text.str());
        }));
    const SweepResult sweep = run_sweep(net, spec, variants, run_options(a, net));
    const std::filesystem::path out(a.out);
    write_artifacts(sweep.base, out / sweep.base.name);
    report(sweep.base, out / sweep.base.name);
    int failed = 0;
    for (const auto& v : sweep.variants) {
        if (v.run) {
            write_artifacts(*v.run, out / v.name);
            report(*v.run, out / v.name);
        } else {
            std::cerr << v.name << ": failed: " << v.error << '\n';
            ++failed;
        }
    }
    auto f = open_out(out / "comparison.csv");
    write_comparison_csv(f, sweep);
    return failed ? kRuntime : kOk;
}

int cmd_perturb(const Args& a)
{
    const Network net = load_network(a);
    const ScenarioSpec spec = load_scenario(a, true);
    const RunArtifacts run = run_scenario(net, spec, run_options(a, net));
    const PerturbationSpec pspec = spec.perturbation.value_or(PerturbationSpec{});
    const PerturbationResult res = input([&] { return run_perturbation(run, pspec, a.threads); });
    const auto dir = std::filesystem::path(a.out) / run.name;
    write_artifacts(run, dir);
    auto f = open_out(dir / "perturbation.csv");
    write_perturbation_csv(f, res);
    for (const auto& fail : res.failures)
        std::cerr << "level " << fail.level << " repeat " << fail.repeat << ": " << fail.reason << '\n';
    for (std::size_t i = 0; i < pspec.levels.size(); ++i) {
        double worst = 0.0;
        for (double x : res.max_abs_pct_all[i])
            if (std::isfinite(x))
                worst = std::max(worst, x);
        std::cerr << "level " << pspec.levels[i] << ": largest hourly MEI change " << worst << "%\n";
    }
    report(run, dir);
    return kOk;
}

int cmd_curves(const Args& a)
{
    const Network base = load_network(a);
    const ScenarioSpec spec = load_scenario(a, false);
    const Network net = input([&] { return apply_scenario(base, spec); });
    const BepEstimate bep = estimate_bep(net, spec.bep, spec.seed, a.threads);
    const auto dir = std::filesystem::path(a.out) / spec.name;
    {
        auto f = open_out(dir / "bep.csv");
        f << "pump_id,flow_m3h,head_m\n";
        for (const auto& [id, p] : bep)
            f << id << ',' << p.x() << ',' << p.y() << '\n';
    }
    {
        auto f = open_out(dir / "network_bep.inp");
        f << emit_inp(apply_bep(net, bep, spec.bep.efficiency));
    }
    std::cerr << spec.name << ": " << bep.size() << " pump curve(s) -> " << dir.string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Marginal energy intensity of water in multi-source distribution networks"};
    app.require_subcommand(1);
    Args a;

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Args&);
        bool scenario_required;
    };
    const Command commands[] = {
        {"validate", "Parse and check a network (and scenario)", cmd_validate, false},
        {"simulate", "Simulate a pump schedule and dump the hydraulics", cmd_simulate, false},
        {"optimize", "Optimise the pump schedule", cmd_optimize, true},
        {"mei", "Optimise (or take --schedule), simulate and backtrack", cmd_mei, true},
        {"sweep", "Base case plus D+-, R+-, source-share and overlay variants", cmd_sweep, true},
        {"perturb", "Demand perturbation under the base schedule", cmd_perturb, true},
        {"curves", "Estimate pump best-efficiency points and rebuild curves", cmd_curves, false},
    };
    int (*chosen)(const Args&) = nullptr;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("network,--network", a.network, "EPANET INP file")->required()->check(CLI::ExistingFile);
        auto* sc = sub->add_option("scenario,--scenario", a.scenario, "Scenario file")->check(CLI::ExistingFile);
        if (c.scenario_required)
            sc->required();
        sub->add_option("--schedule", a.schedule, "Pump schedule file (one 0/1 row per pump)")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", a.out, "Output directory")->capture_default_str();
        sub->add_option("--seed", a.seed, "Override the scenario seed");
        sub->add_option("--threads", a.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--generations", a.generations, "Override GA generations")->check(CLI::PositiveNumber);
        sub->add_option("--population", a.population, "Override GA population")->check(CLI::PositiveNumber);
        if (std::string(c.name) == "sweep")
            sub->add_option("--overlay", a.overlays, "Extra variant as a scenario overlay")
                ->check(CLI::ExistingFile);
        sub->add_flag("-v,--verbose", a.verbose, "Report GA progress");
        sub->callback([&chosen, run = c.run] { chosen = run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        std::cerr << app.help();
        return kRuntime;
    }

    try {
        return chosen(a);
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.stage() == "scenario" ? kInvalid : kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
