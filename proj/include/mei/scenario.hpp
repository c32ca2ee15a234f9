#pragma once

#include "mei/network.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mei {

/// Genetic-algorithm and fitness settings. Defaults: 500 x 500, five elites,
/// a 250-strong parent pool, 80% mutation, 20 psi floor, 2% fraction
/// tolerance.
struct GAConfig {
    int population = 500;
    int generations = 500;
    int elites = 5;
    int parent_pool = 250;
    double mutation_prob = 0.8;
    int mutation_max_pumps = 4;
    int mutation_max_steps = 6;
    double min_pressure_m = 14.06;
    double fraction_tolerance = 0.02;
    double fraction_weight = 250000.0;
    double pressure_weight = 10.0;
    double tank_offset = 0.2;
    /// Square (p_min - p_low) even when pressure is healthy. Off by default:
    /// only deficits are penalized.
    bool strict_pressure_penalty = false;
    /// Initial population gives up after budget_factor * population draws.
    int init_budget_factor = 100;
    /// Offspring slot clones a selected parent after this many infeasible tries.
    int max_offspring_attempts = 200;
    std::uint64_t rng_seed = 1;

    bool operator==(const GAConfig&) const = default;
};

struct PerturbationSpec {
    int n_consumers = 5;
    std::vector<double> levels{0.10, 0.20, 0.40};
    int repeats = 10;

    bool operator==(const PerturbationSpec&) const = default;
};

/// Optional best-efficiency-point sampling ahead of curve reconstruction.
struct BepSampling {
    bool enabled = false;
    int samples = 1000;
    double demand_min = 0.5;
    double demand_max = 1.5;
    double efficiency = kDefaultBepEfficiency;

    bool operator==(const BepSampling&) const = default;
};

struct ScenarioSpec {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::optional<int> start_hour;
    double demand_multiplier = 1.0;
    /// Multiplies physical roughness; the Hazen-Williams C is divided by it.
    double roughness_multiplier = 1.0;
    PriceSeries prices;
    std::map<std::string, double> transmission_eis;
    std::map<std::string, double> treatment_eis;
    std::map<std::string, double> target_fractions;
    /// Node id -> elevation offset in m.
    std::map<std::string, double> elevation_offsets;
    GAConfig ga;
    std::optional<PerturbationSpec> perturbation;
    BepSampling bep;

    /// Transmission + treatment per injection point mentioned in the scenario.
    std::map<std::string, double> pre_injection_eis() const;
    bool operator==(const ScenarioSpec&) const = default;
};

/// Reads the sectioned key = value scenario format. Keys absent from `text`
/// keep their value from `base`, so the same call parses complete scenarios
/// and variant overlays. Throws ParseError on unknown keys, bad values,
/// target fractions not summing to 1 (within 1e-9) and an empty [prices]
/// section.
ScenarioSpec parse_scenario(std::string_view text, const ScenarioSpec& base = {});
ScenarioSpec read_scenario_file(const std::filesystem::path& path, const ScenarioSpec& base = {});

/// Throws ParseError when the scenario lacks what a full run needs (a
/// 24-value price series).
void require_runnable(const ScenarioSpec& spec);

/// Returns a transformed copy of `net`: demands scaled, C divided by the
/// roughness multiplier, elevations offset, source energy intensities and
/// target fractions set, start hour moved. Throws std::invalid_argument for
/// unknown node ids.
Network apply_scenario(const Network& net, const ScenarioSpec& spec);

}  // namespace mei
