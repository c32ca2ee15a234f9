#include "mei/ga.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace mei {

Eigen::VectorXd supply_fractions(const SimulationResult& sim)
{
    const double total = sim.injected_volume.sum();
    if (!(total > 0.0))
        return Eigen::VectorXd::Zero(sim.injected_volume.size());
    return sim.injected_volume / total;
}

FitnessBreakdown fitness(const SimulationResult& sim, const PriceSeries& prices, const Network& net,
                         const GAConfig& cfg)
{
    if (prices.prices.size() != 24)
        throw std::invalid_argument("price series '" + prices.id + "' has " + std::to_string(prices.prices.size()) +
                                    " values, expected 24");
    FitnessBreakdown f;
    const double price_sum = std::accumulate(prices.prices.begin(), prices.prices.end(), 0.0);
    for (std::size_t s = 0; s < sim.states.size(); ++s) {
        const double e = sim.energy_per_step[static_cast<Eigen::Index>(s)];
        f.energy_kwh += e;
        f.cost += e * prices.prices[static_cast<std::size_t>(sim.states[s].clock_hour)];
    }
    f.c_elec = price_sum > 0.0 ? 24.0 / price_sum * f.cost : 0.0;

    for (std::size_t t = 0; t < net.tanks.size(); ++t) {
        const Tank& tk = net.tanks[t];
        const auto i = static_cast<Eigen::Index>(t);
        const double dh = sim.final_tank_levels[i] - sim.initial_tank_levels[i];
        const double x = (dh / (tk.max_level - tk.min_level) + cfg.tank_offset) * 100.0;
        f.p_tank += x * x;
    }

    if (std::isfinite(sim.p_low)) {
        double d = cfg.min_pressure_m - sim.p_low;
        if (!cfg.strict_pressure_penalty)
            d = std::max(d, 0.0);
        f.p_pressure = d * d * cfg.pressure_weight;
    }

    const Eigen::VectorXd share = supply_fractions(sim);
    for (std::size_t r = 0; r < net.reservoirs.size(); ++r) {
        const double d = share[static_cast<Eigen::Index>(r)] - net.reservoirs[r].target_fraction;
        if (std::abs(d) > cfg.fraction_tolerance)
            f.p_fraction += d * d * cfg.fraction_weight;
    }
    f.total = f.c_elec + f.p_tank + f.p_pressure + f.p_fraction;
    return f;
}

ScheduleEvaluator::ScheduleEvaluator(const Network& net, PriceSeries prices, GAConfig cfg, SolverOptions options)
    : net_(net), prices_(std::move(prices)), cfg_(cfg), options_(options),
      pumps_(static_cast<int>(net.pumps.size()))
{
    if (prices_.prices.size() != 24)
        throw std::invalid_argument("price series '" + prices_.id + "' has " + std::to_string(prices_.prices.size()) +
                                    " values, expected 24");
}

std::optional<Individual> ScheduleEvaluator::evaluate(const PumpSchedule& schedule, std::string* reason) const
{
    const SimulationResult sim = simulate_eps(net_, schedule, options_);
    if (!sim.feasible) {
        if (reason)
            *reason = sim.infeasibility_reason;
        return std::nullopt;
    }
    return Individual{schedule, fitness(sim, prices_, net_, cfg_)};
}

namespace {

PumpSchedule random_schedule(int pumps, int hours, Rng& rng)
{
    PumpSchedule s(pumps, hours);
    std::uniform_int_distribution<int> bit(0, 1);
    for (int p = 0; p < pumps; ++p)
        for (int h = 0; h < hours; ++h)
            s(p, h) = bit(rng) == 1;
    return s;
}

// "step 3 (hour 9): tank T ..." -> "tank T ...", so reasons group across steps.
std::string strip_step(const std::string& reason)
{
    if (reason.rfind("step ", 0) != 0)
        return reason;
    const auto colon = reason.find(": ");
    return colon == std::string::npos ? reason : reason.substr(colon + 2);
}

void rank(std::vector<Individual>& pop)
{
    std::stable_sort(pop.begin(), pop.end(),
                     [](const Individual& a, const Individual& b) { return a.fitness.total < b.fitness.total; });
}

GenerationStats stats_of(int generation, const std::vector<Individual>& ranked)
{
    GenerationStats g;
    g.generation = generation;
    g.best = ranked.front().fitness.total;
    g.best_breakdown = ranked.front().fitness;
    double sum = 0.0;
    for (const auto& ind : ranked)
        sum += ind.fitness.total;
    g.mean = sum / static_cast<double>(ranked.size());
    return g;
}

}  // namespace

std::vector<Individual> init_population(const ScheduleEvaluator& eval, int threads)
{
    const GAConfig& cfg = eval.config();
    const int n = cfg.population;
    const long long budget = static_cast<long long>(cfg.init_budget_factor) * n;
    std::vector<Individual> pop;
    pop.reserve(static_cast<std::size_t>(n));
    std::map<std::string, int> reasons;
    long long drawn = 0;
    while (static_cast<int>(pop.size()) < n && drawn < budget) {
        const int batch = static_cast<int>(std::min<long long>(budget - drawn, n - static_cast<int>(pop.size())));
        std::vector<std::optional<Individual>> out(static_cast<std::size_t>(batch));
        std::vector<std::string> why(static_cast<std::size_t>(batch));
        parallel_for(batch, threads, [&](int i) {
            Rng rng = keyed_rng(cfg.rng_seed, 0, static_cast<std::uint64_t>(drawn + i));
            const PumpSchedule s = random_schedule(eval.pumps(), eval.hours(), rng);
            out[static_cast<std::size_t>(i)] = eval.evaluate(s, &why[static_cast<std::size_t>(i)]);
        });
        for (int i = 0; i < batch; ++i) {
            auto& o = out[static_cast<std::size_t>(i)];
            if (o && static_cast<int>(pop.size()) < n)
                pop.push_back(std::move(*o));
            else if (!o)
                ++reasons[strip_step(why[static_cast<std::size_t>(i)])];
        }
        drawn += batch;
    }
    if (static_cast<int>(pop.size()) < n) {
        std::string common = "none recorded";
        int count = 0;
        for (const auto& [r, c] : reasons)
            if (c > count) {
                common = r;
                count = c;
            }
        throw PopulationError("found " + std::to_string(pop.size()) + " feasible schedules in " +
                              std::to_string(budget) + " random draws (need " + std::to_string(n) +
                              "); most common failure (" + std::to_string(count) + "x): " + common);
    }
    return pop;
}

int select_parent(int population, int parent_pool, Rng& rng)
{
    parent_pool = std::clamp(parent_pool, 1, population);
    long long total = 0;
    for (int r = 1; r <= parent_pool; ++r)
        total += population - r;
    if (total <= 0)
        return 0;
    long long u = std::uniform_int_distribution<long long>(0, total - 1)(rng);
    for (int r = 1; r <= parent_pool; ++r) {
        const long long w = population - r;
        if (u < w)
            return r - 1;
        u -= w;
    }
    return parent_pool - 1;
}

PumpSchedule crossover_at(const PumpSchedule& a, const PumpSchedule& b, int p1, int p2)
{
    PumpSchedule child = a;
    for (int p = 0; p < a.pumps(); ++p)
        for (int h = p1; h < p2; ++h)
            child(p, h) = b(p, h);
    return child;
}

PumpSchedule crossover_two_point(const PumpSchedule& a, const PumpSchedule& b, Rng& rng)
{
    if (a.pumps() != b.pumps() || a.hours() != b.hours())
        throw std::invalid_argument("crossover parents differ in shape");
    const int n = a.hours();
    // Pair index k enumerates (p1, p2) with p1 < p2 row by row.
    int k = std::uniform_int_distribution<int>(0, n * (n + 1) / 2 - 1)(rng);
    int p1 = 0;
    while (k >= n - p1) {
        k -= n - p1;
        ++p1;
    }
    return crossover_at(a, b, p1, p1 + 1 + k);
}

PumpSchedule mutate(const PumpSchedule& s, const GAConfig& cfg, Rng& rng)
{
    if (s.pumps() == 0 || s.hours() == 0)
        return s;
    if (!(std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.mutation_prob))
        return s;
    PumpSchedule out = s;
    const int k = std::uniform_int_distribution<int>(1, std::min(cfg.mutation_max_pumps, s.pumps()))(rng);
    std::vector<int> order(static_cast<std::size_t>(s.pumps()));
    std::iota(order.begin(), order.end(), 0);
    const int max_len = std::min(cfg.mutation_max_steps, s.hours());
    for (int i = 0; i < k; ++i) {
        const int j = std::uniform_int_distribution<int>(i, s.pumps() - 1)(rng);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        const int pump = order[static_cast<std::size_t>(i)];
        const int len = std::uniform_int_distribution<int>(1, max_len)(rng);
        const int start = std::uniform_int_distribution<int>(0, s.hours() - len)(rng);
        const bool bit = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        for (int h = start; h < start + len; ++h)
            out(pump, h) = bit;
    }
    return out;
}

GAResult evolve(const ScheduleEvaluator& eval, int threads, const GenerationCallback& on_generation)
{
    const GAConfig& cfg = eval.config();
    GAResult res;
    std::vector<Individual> pop = init_population(eval, threads);
    res.evaluations = cfg.population;
    rank(pop);
    res.history.push_back(stats_of(0, pop));
    if (on_generation)
        on_generation(res.history.back());

    const int n = cfg.population;
    const int elites = std::min(cfg.elites, n);
    for (int g = 1; g < cfg.generations; ++g) {
        std::vector<Individual> next(static_cast<std::size_t>(n));
        std::copy(pop.begin(), pop.begin() + elites, next.begin());
        std::vector<int> evals(static_cast<std::size_t>(n), 0);
        std::vector<char> fell_back(static_cast<std::size_t>(n), 0);
        parallel_for(n - elites, threads, [&](int i) {
            const int slot = elites + i;
            Rng rng = keyed_rng(cfg.rng_seed, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(slot));
            for (int attempt = 0; attempt < cfg.max_offspring_attempts; ++attempt) {
                const auto& a = pop[static_cast<std::size_t>(select_parent(n, cfg.parent_pool, rng))];
                const auto& b = pop[static_cast<std::size_t>(select_parent(n, cfg.parent_pool, rng))];
                const PumpSchedule child = mutate(crossover_two_point(a.schedule, b.schedule, rng), cfg, rng);
                ++evals[static_cast<std::size_t>(slot)];
                if (auto ind = eval.evaluate(child)) {
                    next[static_cast<std::size_t>(slot)] = std::move(*ind);
                    return;
                }
            }
            next[static_cast<std::size_t>(slot)] = pop[static_cast<std::size_t>(select_parent(n, cfg.parent_pool, rng))];
            fell_back[static_cast<std::size_t>(slot)] = 1;
        });
        for (int i = 0; i < n; ++i) {
            res.evaluations += evals[static_cast<std::size_t>(i)];
            res.fallbacks += fell_back[static_cast<std::size_t>(i)];
        }
        pop = std::move(next);
        rank(pop);
        res.history.push_back(stats_of(g, pop));
        if (on_generation)
            on_generation(res.history.back());
    }
    res.best = pop.front();
    res.population = std::move(pop);
    return res;
}

void write_history_csv(std::ostream& out, const std::vector<GenerationStats>& history)
{
    using detail::format_double;
    out << "generation,best_F,mean_F,best_c_elec,best_p_tank,best_p_pressure,best_p_fraction\n";
    for (const auto& g : history) {
        const auto& b = g.best_breakdown;
        out << g.generation << ',' << format_double(g.best) << ',' << format_double(g.mean) << ','
            << format_double(b.c_elec) << ',' << format_double(b.p_tank) << ',' << format_double(b.p_pressure) << ','
            << format_double(b.p_fraction) << '\n';
    }
}

}  // namespace mei
