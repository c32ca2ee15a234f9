#pragma once

#include "mei/hydraulics.hpp"
#include "mei/network.hpp"
#include "mei/parallel.hpp"
#include "mei/scenario.hpp"
#include "mei/schedule.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mei {

struct FitnessBreakdown {
    double total = 0.0;
    double c_elec = 0.0;
    double p_tank = 0.0;
    double p_pressure = 0.0;
    double p_fraction = 0.0;
    double energy_kwh = 0.0;
    double cost = 0.0;  // sum E_t c_t, currency
};

/// Fitness of a feasible run. `prices` is indexed by clock hour.
/// Throws std::invalid_argument when the price series is not 24 long.
FitnessBreakdown fitness(const SimulationResult& sim, const PriceSeries& prices, const Network& net,
                         const GAConfig& cfg);

/// Share of injected volume per reservoir (zeros when nothing was injected).
Eigen::VectorXd supply_fractions(const SimulationResult& sim);

struct Individual {
    PumpSchedule schedule;
    FitnessBreakdown fitness;
};

/// Simulates and scores schedules for one network and price series.
/// Stateless apart from its inputs; safe to call from several threads.
class ScheduleEvaluator {
public:
    ScheduleEvaluator(const Network& net, PriceSeries prices, GAConfig cfg, SolverOptions options = {});

    /// Empty when infeasible; `reason` then receives the simulation's reason.
    std::optional<Individual> evaluate(const PumpSchedule& schedule, std::string* reason = nullptr) const;

    const Network& network() const { return net_; }
    const GAConfig& config() const { return cfg_; }
    const SolverOptions& solver_options() const { return options_; }
    int pumps() const { return pumps_; }
    int hours() const { return net_.horizon_steps; }

private:
    const Network& net_;
    PriceSeries prices_;
    GAConfig cfg_;
    SolverOptions options_;
    int pumps_ = 0;
};

class PopulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniform random 0/1 schedules, kept when feasible. Draw k uses stream
/// (seed, 0, k); candidates are accepted in draw order. Throws
/// PopulationError after init_budget_factor * population draws, naming the
/// most common infeasibility reason.
std::vector<Individual> init_population(const ScheduleEvaluator& eval, int threads = 1);

/// Index into a population ranked best first, drawn from the best
/// `parent_pool` with weight (population - rank).
int select_parent(int population, int parent_pool, Rng& rng);

/// Two cut hours 0 <= p1 < p2 <= hours, uniform over all pairs: the child
/// takes `b` on [p1, p2) and `a` elsewhere, on every pump row.
PumpSchedule crossover_two_point(const PumpSchedule& a, const PumpSchedule& b, Rng& rng);
PumpSchedule crossover_at(const PumpSchedule& a, const PumpSchedule& b, int p1, int p2);

/// With probability mutation_prob, sets a run of 1..mutation_max_steps
/// adjacent hours to a random bit on each of 1..mutation_max_pumps distinct
/// pumps.
PumpSchedule mutate(const PumpSchedule& s, const GAConfig& cfg, Rng& rng);

struct GenerationStats {
    int generation = 0;
    double best = 0.0;
    double mean = 0.0;
    FitnessBreakdown best_breakdown;
};

struct GAResult {
    Individual best;
    std::vector<GenerationStats> history;
    std::vector<Individual> population;  // final, ranked
    long long evaluations = 0;
    long long fallbacks = 0;  // offspring slots that gave up and cloned a parent
};

using GenerationCallback = std::function<void(const GenerationStats&)>;

/// Generation 0 is the initial population; each later generation keeps the
/// elites and refills the rest from crossover and mutation, re-drawing
/// parents while offspring are infeasible. Slot s of generation g draws from
/// stream (seed, g, s), so results are independent of `threads`.
GAResult evolve(const ScheduleEvaluator& eval, int threads = 1, const GenerationCallback& on_generation = {});

/// generation,best_F,mean_F,best_c_elec,best_p_tank,best_p_pressure,best_p_fraction
void write_history_csv(std::ostream& out, const std::vector<GenerationStats>& history);

}  // namespace mei
