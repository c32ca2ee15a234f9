#include "mei/runner.hpp"

#include "mei/inp.hpp"
#include "mei/parallel.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace mei {

using detail::format_double;

namespace {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream f(p);
    if (!f)
        throw std::runtime_error("cannot write " + p.string());
    return f;
}

}  // namespace

RunArtifacts run_scenario(const Network& base, const ScenarioSpec& spec, const RunOptions& options)
{
    RunArtifacts a;
    a.name = spec.name;
    a.spec = spec;
    a.spec.ga.rng_seed = spec.seed;
    stage("scenario", [&] {
        require_runnable(a.spec);
        a.net = apply_scenario(base, a.spec);
    });
    if (a.spec.bep.enabled)
        stage("curves", [&] {
            a.bep = estimate_bep(a.net, a.spec.bep, a.spec.seed, options.threads, options.solver);
            a.net = apply_bep(a.net, *a.bep, a.spec.bep.efficiency);
        });

    if (options.schedule) {
        a.schedule = *options.schedule;
    } else {
        stage("optimize", [&] {
            const ScheduleEvaluator eval(a.net, a.spec.prices, a.spec.ga, options.solver);
            a.ga = evolve(eval, options.threads, options.on_generation);
            a.schedule = a.ga->best.schedule;
        });
    }

    stage("simulate", [&] {
        if (a.schedule.pumps() != static_cast<int>(a.net.pumps.size()) || a.schedule.hours() != a.net.horizon_steps)
            throw std::invalid_argument("schedule is " + std::to_string(a.schedule.pumps()) + " x " +
                                        std::to_string(a.schedule.hours()) + ", network needs " +
                                        std::to_string(a.net.pumps.size()) + " x " +
                                        std::to_string(a.net.horizon_steps));
        a.sim = simulate_eps(a.net, a.schedule, options.solver);
        if (!a.sim.feasible)
            throw std::runtime_error("schedule is infeasible: " + a.sim.infeasibility_reason);
        a.fitness = fitness(a.sim, a.spec.prices, a.net, a.spec.ga);
    });
    stage("backtrack", [&] {
        a.mei = backtrack(a.net, a.sim);
        a.daily = daily_average_mei(a.mei);
        a.summary = summarize(a.name, a.spec.seed, a.net, a.sim, a.mei, a.fitness);
    });
    return a;
}

void write_artifacts(const RunArtifacts& run, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    {
        auto f = open_out(dir / "schedule.txt");
        f << format_schedule(run.schedule);
    }
    if (run.ga) {
        auto f = open_out(dir / "fitness_history.csv");
        write_history_csv(f, run.ga->history);
    }
    {
        auto f = open_out(dir / "hydraulics.csv");
        write_state_csv(f, run.net, run.sim);
    }
    {
        auto f = open_out(dir / "mei_hourly.csv");
        write_mei_hourly_csv(f, run.mei);
    }
    {
        auto f = open_out(dir / "mei_daily.csv");
        write_mei_daily_csv(f, run.net, run.mei, run.daily);
    }
    {
        auto f = open_out(dir / "cdf.csv");
        write_cdf_csv(f, run.mei, run.daily);
    }
    {
        auto f = open_out(dir / "summary.json");
        write_summary_json(f, run.summary);
    }
}

std::uint64_t variant_seed(std::uint64_t base_seed, const std::string& name)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(base_seed ^ h);
}

std::vector<SweepVariant> standard_variants(const Network& base, const ScenarioSpec& spec)
{
    std::vector<SweepVariant> out;
    auto add = [&](std::string name, auto&& edit) {
        ScenarioSpec s = spec;
        s.name = name;
        s.seed = variant_seed(spec.seed, name);
        edit(s);
        out.push_back({std::move(name), std::move(s)});
    };
    add("D-", [&](ScenarioSpec& s) { s.demand_multiplier = spec.demand_multiplier * 0.75; });
    add("D+", [&](ScenarioSpec& s) { s.demand_multiplier = spec.demand_multiplier * 1.25; });
    add("R-", [&](ScenarioSpec& s) { s.roughness_multiplier = spec.roughness_multiplier * 0.5; });
    add("R+", [&](ScenarioSpec& s) { s.roughness_multiplier = spec.roughness_multiplier * 1.5; });

    const Network net = apply_scenario(base, spec);
    if (net.reservoirs.size() < 2)
        return out;
    std::size_t hi = 0;
    for (std::size_t r = 1; r < net.reservoirs.size(); ++r)
        if (net.reservoirs[r].pre_injection_ei() > net.reservoirs[hi].pre_injection_ei())
            hi = r;
    const std::string& id = net.reservoirs[hi].id;
    const double rest = 1.0 - net.reservoirs[hi].target_fraction;
    for (const auto& [suffix, share] : {std::pair{"-", 0.3}, std::pair{"+", 0.7}}) {
        add(id + suffix, [&](ScenarioSpec& s) {
            for (std::size_t r = 0; r < net.reservoirs.size(); ++r) {
                const auto& res = net.reservoirs[r];
                const double f = r == hi ? share
                                 : rest > 0.0
                                     ? res.target_fraction / rest * (1.0 - share)
                                     : (1.0 - share) / static_cast<double>(net.reservoirs.size() - 1);
                s.target_fractions[res.id] = f;
            }
        });
    }
    return out;
}

SweepVariant overlay_variant(const ScenarioSpec& spec, std::string_view text)
{
    ScenarioSpec base = spec;
    base.name.clear();
    ScenarioSpec s = parse_scenario(text, base);
    if (s.name.empty())
        throw std::invalid_argument("variant overlay needs [scenario] name");
    if (s.seed == spec.seed)
        s.seed = variant_seed(spec.seed, s.name);
    return {s.name, s};
}

SweepResult run_sweep(const Network& base, const ScenarioSpec& spec, const std::vector<SweepVariant>& variants,
                      const RunOptions& options)
{
    SweepResult out;
    out.base = run_scenario(base, spec, options);
    out.variants.resize(variants.size());
    const int threads = resolve_threads(options.threads);
    const int outer = std::max(1, std::min(threads, static_cast<int>(variants.size())));
    RunOptions inner = options;
    inner.threads = std::max(1, threads / outer);
    inner.on_generation = {};
    parallel_for(static_cast<int>(variants.size()), outer, [&](int i) {
        const auto& v = variants[static_cast<std::size_t>(i)];
        auto& o = out.variants[static_cast<std::size_t>(i)];
        o.name = v.name;
        o.seed = v.spec.seed;
        try {
            o.run = run_scenario(base, v.spec, inner);
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });
    return out;
}

void write_comparison_csv(std::ostream& out, const SweepResult& sweep)
{
    out << "variant,seed,status,consumers,mean_daily_mei,min_daily_mei,median_daily_mei,max_daily_mei,system_mei,"
           "mean_shift,mean_shift_pct,c_elec,energy_kwh,error\n";
    const auto& b = sweep.base;
    auto row = [&](const std::string& name, std::uint64_t seed, const RunArtifacts* run, const std::string& error) {
        out << name << ',' << seed << ',';
        if (!run) {
            std::string msg = error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            out << "failed,,,,,,,,,,,\"" << msg << "\"\n";
            return;
        }
        const auto& d = run->summary.daily;
        double pct = 0.0;
        int shared = 0;
        for (int v : consumer_nodes(b.daily)) {
            if (v >= run->daily.node.size())
                continue;
            const double x = run->daily.node[v];
            const double y = b.daily.node[v];
            if (std::isfinite(x) && std::isfinite(y) && y != 0.0) {
                pct += (x - y) / y * 100.0;
                ++shared;
            }
        }
        out << "ok," << d.consumers << ',' << format_double(d.mean) << ',' << format_double(d.min) << ','
            << format_double(d.median) << ',' << format_double(d.max) << ',' << format_double(d.system) << ','
            << format_double(d.mean - b.summary.daily.mean) << ','
            << format_double(shared ? pct / shared : kUndefined) << ',' << format_double(run->fitness.c_elec) << ','
            << format_double(run->summary.total_energy_kwh) << ",\n";
    };
    row("base", b.spec.seed, &b, {});
    for (const auto& v : sweep.variants)
        row(v.name, v.seed, v.run ? &*v.run : nullptr, v.error);
}

PerturbationResult run_perturbation(const RunArtifacts& base, const PerturbationSpec& spec, int threads)
{
    std::vector<int> consumers;
    for (std::size_t j = 0; j < base.net.junctions.size(); ++j)
        if (base.net.junctions[j].base_demand > 0.0)
            consumers.push_back(static_cast<int>(j));
    if (spec.n_consumers > static_cast<int>(consumers.size()))
        throw std::invalid_argument("perturbation asks for " + std::to_string(spec.n_consumers) +
                                    " consumers, network has " + std::to_string(consumers.size()));

    const int levels = static_cast<int>(spec.levels.size());
    const int jobs = levels * spec.repeats;
    struct Job {
        std::vector<PerturbationRow> rows;
        std::optional<std::string> failure;
        double max_pct = kUndefined;
        double max_pct_all = kUndefined;
    };
    std::vector<Job> done(static_cast<std::size_t>(jobs));
    const Eigen::MatrixXd& m0 = base.mei.mei;

    parallel_for(jobs, threads, [&](int k) {
        const int li = k / spec.repeats;
        const int rep = k % spec.repeats;
        const double level = spec.levels[static_cast<std::size_t>(li)];
        Job& job = done[static_cast<std::size_t>(k)];

        // Keyed by repeat only: every level perturbs the same consumers the same way.
        Rng rng = keyed_rng(base.spec.seed, 0x9e27, static_cast<std::uint64_t>(rep));
        std::vector<int> pick = consumers;
        for (int i = 0; i < spec.n_consumers; ++i) {
            const int j = std::uniform_int_distribution<int>(i, static_cast<int>(pick.size()) - 1)(rng);
            std::swap(pick[static_cast<std::size_t>(i)], pick[static_cast<std::size_t>(j)]);
        }
        pick.resize(static_cast<std::size_t>(spec.n_consumers));
        Network net = base.net;
        for (int j : pick) {
            const double sign = std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0;
            net.junctions[static_cast<std::size_t>(j)].base_demand *= 1.0 + sign * level;
        }

        const SimulationResult sim = simulate_eps(net, base.schedule);
        if (!sim.feasible) {
            job.failure = sim.infeasibility_reason;
            return;
        }
        MEIReport rep_mei;
        try {
            rep_mei = backtrack(net, sim);
        } catch (const std::exception& e) {
            job.failure = e.what();
            return;
        }
        const Eigen::MatrixXd& m1 = rep_mei.mei;
        double worst = 0.0;
        double worst_all = 0.0;
        for (int s = 0; s < m0.rows(); ++s)
            for (Eigen::Index v = 0; v < m0.cols(); ++v)
                if (std::isfinite(m0(s, v)) && std::isfinite(m1(s, v)) && m0(s, v) != 0.0)
                    worst_all = std::max(worst_all, std::abs(m1(s, v) - m0(s, v)) / std::abs(m0(s, v)) * 100.0);
        std::sort(pick.begin(), pick.end());
        for (int j : pick)
            for (int s = 0; s < m0.rows(); ++s) {
                if (!std::isfinite(m0(s, j)) || !std::isfinite(m1(s, j)))
                    continue;
                PerturbationRow r;
                r.level = level;
                r.repeat = rep;
                r.node_id = base.net.junctions[static_cast<std::size_t>(j)].id;
                r.hour = s;
                r.base_mei = m0(s, j);
                r.perturbed_mei = m1(s, j);
                r.delta = r.perturbed_mei - r.base_mei;
                r.delta_pct = r.base_mei != 0.0 ? r.delta / r.base_mei * 100.0 : 0.0;
                worst = std::max(worst, std::abs(r.delta_pct));
                job.rows.push_back(std::move(r));
            }
        job.max_pct = worst;
        job.max_pct_all = worst_all;
    });

    PerturbationResult out;
    out.max_abs_pct.assign(static_cast<std::size_t>(levels), {});
    out.max_abs_pct_all.assign(static_cast<std::size_t>(levels), {});
    for (int k = 0; k < jobs; ++k) {
        auto& job = done[static_cast<std::size_t>(k)];
        const int li = k / spec.repeats;
        if (job.failure)
            out.failures.push_back({spec.levels[static_cast<std::size_t>(li)], k % spec.repeats, *job.failure});
        out.max_abs_pct[static_cast<std::size_t>(li)].push_back(job.max_pct);
        out.max_abs_pct_all[static_cast<std::size_t>(li)].push_back(job.max_pct_all);
        std::move(job.rows.begin(), job.rows.end(), std::back_inserter(out.rows));
    }
    return out;
}

void write_perturbation_csv(std::ostream& out, const PerturbationResult& result)
{
    out << "level,repeat,node_id,hour,base_mei,perturbed_mei,delta,delta_pct\n";
    for (const auto& r : result.rows)
        out << format_double(r.level) << ',' << r.repeat << ',' << r.node_id << ',' << r.hour << ','
            << format_double(r.base_mei) << ',' << format_double(r.perturbed_mei) << ',' << format_double(r.delta)
            << ',' << format_double(r.delta_pct) << '\n';
}

}  // namespace mei
