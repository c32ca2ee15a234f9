#pragma once

#include "mei/backtrack.hpp"
#include "mei/bep.hpp"
#include "mei/ga.hpp"
#include "mei/hydraulics.hpp"
#include "mei/network.hpp"
#include "mei/report.hpp"
#include "mei/scenario.hpp"
#include "mei/schedule.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mei {

/// Error raised by one pipeline stage; what() is prefixed with the stage.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct RunOptions {
    int threads = 0;
    /// Skip the GA and use this schedule.
    std::optional<PumpSchedule> schedule;
    GenerationCallback on_generation;
    SolverOptions solver;
};

struct RunArtifacts {
    std::string name;
    ScenarioSpec spec;
    Network net;  // after scenario and curve reconstruction
    std::optional<BepEstimate> bep;
    std::optional<GAResult> ga;
    PumpSchedule schedule;
    FitnessBreakdown fitness;
    SimulationResult sim;
    MEIReport mei;
    DailyMEI daily;
    RunSummary summary;
};

/// apply_scenario, optional BEP curve rebuild, GA (unless a schedule is
/// given), simulation of the chosen schedule, backtracking and summary.
RunArtifacts run_scenario(const Network& base, const ScenarioSpec& spec, const RunOptions& options = {});

/// Writes schedule.txt, fitness_history.csv (when the GA ran),
/// hydraulics.csv, mei_hourly.csv, mei_daily.csv, cdf.csv and summary.json
/// into `dir`, creating it.
void write_artifacts(const RunArtifacts& run, const std::filesystem::path& dir);

struct SweepVariant {
    std::string name;
    ScenarioSpec spec;
};

/// Seed for a named variant, derived from the base seed and the name only.
std::uint64_t variant_seed(std::uint64_t base_seed, const std::string& name);

/// D-/D+ (demand x0.75 / x1.25), R-/R+ (roughness x0.5 / x1.5) and the
/// highest pre-injection EI source's target share set to 0.3 / 0.7 (others
/// rescaled), named "<id>-" / "<id>+". Each variant gets variant_seed.
std::vector<SweepVariant> standard_variants(const Network& base, const ScenarioSpec& spec);

/// Overlays `text` onto the base scenario as a variant; the overlay's
/// [scenario] name names it.
SweepVariant overlay_variant(const ScenarioSpec& spec, std::string_view text);

struct VariantOutcome {
    std::string name;
    std::uint64_t seed = 0;
    std::optional<RunArtifacts> run;
    std::string error;
};

struct SweepResult {
    RunArtifacts base;
    std::vector<VariantOutcome> variants;  // in input order
};

/// Runs the base and each variant; a failing variant records its error and
/// the others continue.
SweepResult run_sweep(const Network& base, const ScenarioSpec& spec, const std::vector<SweepVariant>& variants,
                      const RunOptions& options = {});

/// variant,seed,status,consumers,mean_daily_mei,min_daily_mei,median_daily_mei,max_daily_mei,system_mei,
/// mean_shift,mean_shift_pct,c_elec,energy_kwh,error. Shifts are against the base over shared consumers;
/// mean_shift_pct averages the per-node percentage change.
void write_comparison_csv(std::ostream& out, const SweepResult& sweep);

struct PerturbationRow {
    double level = 0.0;
    int repeat = 0;
    std::string node_id;
    int hour = 0;  // step index
    double base_mei = 0.0;
    double perturbed_mei = 0.0;
    double delta = 0.0;
    double delta_pct = 0.0;
};

struct PerturbationFailure {
    double level = 0.0;
    int repeat = 0;
    std::string reason;
};

struct PerturbationResult {
    std::vector<PerturbationRow> rows;
    std::vector<PerturbationFailure> failures;
    /// Per level: largest |delta_pct| over the perturbed consumers, per repeat (NaN if failed).
    std::vector<std::vector<double>> max_abs_pct;
    /// Over every node with defined MEI, not only the perturbed ones.
    std::vector<std::vector<double>> max_abs_pct_all;
};

/// Re-simulates `base` under its own schedule with spec.n_consumers distinct
/// consumers scaled by 1 +/- level (sign drawn per consumer), for every
/// level and repeat. Consumers and signs come from a stream keyed by the
/// scenario seed and the repeat, so repeat k is the same draw at every level.
PerturbationResult run_perturbation(const RunArtifacts& base, const PerturbationSpec& spec, int threads = 0);

/// level,repeat,node_id,hour,base_mei,perturbed_mei,delta,delta_pct
void write_perturbation_csv(std::ostream& out, const PerturbationResult& result);

}  // namespace mei
