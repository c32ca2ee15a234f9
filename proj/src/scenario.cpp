#include "mei/scenario.hpp"

#include "mei/inp.hpp"
#include "text_util.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mei {

std::map<std::string, double> ScenarioSpec::pre_injection_eis() const
{
    std::map<std::string, double> out;
    for (const auto& [id, v] : transmission_eis)
        out[id] += v;
    for (const auto& [id, v] : treatment_eis)
        out[id] += v;
    return out;
}

namespace {

using detail::trim;

struct Entry {
    int line;
    std::string key;
    std::string value;
};

double parse_number(const Entry& e)
{
    const auto v = detail::to_double(e.value);
    if (!v || !std::isfinite(*v))
        throw ParseError(e.line, "cannot parse number for '" + e.key + "': '" + e.value + "'");
    return *v;
}

long long parse_int(const Entry& e)
{
    const auto v = detail::to_integer(e.value);
    if (!v)
        throw ParseError(e.line, "cannot parse integer for '" + e.key + "': '" + e.value + "'");
    return *v;
}

bool parse_bool(const Entry& e)
{
    const std::string v = detail::upper(e.value);
    if (v == "TRUE" || v == "YES" || v == "1" || v == "ON")
        return true;
    if (v == "FALSE" || v == "NO" || v == "0" || v == "OFF")
        return false;
    throw ParseError(e.line, "cannot parse boolean for '" + e.key + "': '" + e.value + "'");
}

std::vector<double> parse_list(const Entry& e)
{
    std::vector<double> out;
    for (auto tok : detail::split(e.value, ',')) {
        const auto v = detail::to_double(tok);
        if (!v || !std::isfinite(*v))
            throw ParseError(e.line, "cannot parse list element '" + std::string(tok) + "' for '" + e.key + "'");
        out.push_back(*v);
    }
    return out;
}

[[noreturn]] void unknown(const Entry& e, const std::string& section)
{
    throw ParseError(e.line, "unknown key '" + e.key + "' in [" + section + "]");
}

void apply_scenario_key(ScenarioSpec& s, const Entry& e)
{
    const std::string& k = e.key;
    if (k == "name")
        s.name = e.value;
    else if (k == "seed")
        s.seed = static_cast<std::uint64_t>(parse_int(e));
    else if (k == "start_hour") {
        const auto h = parse_int(e);
        if (h < 0 || h > 23)
            throw ParseError(e.line, "start_hour must lie in 0-23");
        s.start_hour = static_cast<int>(h);
    } else if (k == "demand_multiplier")
        s.demand_multiplier = parse_number(e);
    else if (k == "roughness_multiplier")
        s.roughness_multiplier = parse_number(e);
    else if (k == "reconstruct_curves")
        s.bep.enabled = parse_bool(e);
    else if (k == "bep_samples")
        s.bep.samples = static_cast<int>(parse_int(e));
    else if (k == "bep_demand_min")
        s.bep.demand_min = parse_number(e);
    else if (k == "bep_demand_max")
        s.bep.demand_max = parse_number(e);
    else if (k == "bep_efficiency")
        s.bep.efficiency = parse_number(e);
    else
        unknown(e, "scenario");
}

void apply_ga_key(GAConfig& g, const Entry& e)
{
    const std::string& k = e.key;
    if (k == "population")
        g.population = static_cast<int>(parse_int(e));
    else if (k == "generations")
        g.generations = static_cast<int>(parse_int(e));
    else if (k == "elites")
        g.elites = static_cast<int>(parse_int(e));
    else if (k == "parent_pool")
        g.parent_pool = static_cast<int>(parse_int(e));
    else if (k == "mutation_prob")
        g.mutation_prob = parse_number(e);
    else if (k == "mutation_max_pumps")
        g.mutation_max_pumps = static_cast<int>(parse_int(e));
    else if (k == "mutation_max_steps")
        g.mutation_max_steps = static_cast<int>(parse_int(e));
    else if (k == "min_pressure_m")
        g.min_pressure_m = parse_number(e);
    else if (k == "fraction_tolerance")
        g.fraction_tolerance = parse_number(e);
    else if (k == "fraction_weight")
        g.fraction_weight = parse_number(e);
    else if (k == "pressure_weight")
        g.pressure_weight = parse_number(e);
    else if (k == "tank_offset")
        g.tank_offset = parse_number(e);
    else if (k == "strict_pressure_penalty")
        g.strict_pressure_penalty = parse_bool(e);
    else if (k == "init_budget_factor")
        g.init_budget_factor = static_cast<int>(parse_int(e));
    else if (k == "max_offspring_attempts")
        g.max_offspring_attempts = static_cast<int>(parse_int(e));
    else
        unknown(e, "ga");
}

void apply_perturbation_key(PerturbationSpec& p, const Entry& e)
{
    if (e.key == "n_consumers")
        p.n_consumers = static_cast<int>(parse_int(e));
    else if (e.key == "levels")
        p.levels = parse_list(e);
    else if (e.key == "repeats")
        p.repeats = static_cast<int>(parse_int(e));
    else
        unknown(e, "perturbation");
}

void check(bool ok, int line, const std::string& msg)
{
    if (!ok)
        throw ParseError(line, msg);
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text, const ScenarioSpec& base)
{
    ScenarioSpec s = base;
    std::string section;
    bool prices_section = false;
    bool prices_seen = false;
    int prices_line = 0;
    int fractions_line = 0;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw.find_first_of("#;");
        std::string_view body = trim(raw.substr(0, hash));
        if (body.empty())
            continue;
        if (body.front() == '[') {
            check(body.back() == ']', line_no, "unterminated section header");
            section = std::string(trim(body.substr(1, body.size() - 2)));
            static const char* known[] = {"scenario", "prices", "sources", "elevation_offsets", "ga", "perturbation"};
            bool ok = false;
            for (const char* k : known)
                ok = ok || section == k;
            check(ok, line_no, "unknown section [" + section + "]");
            if (section == "prices") {
                prices_section = true;
                prices_line = line_no;
            }
            if (section == "perturbation" && !s.perturbation)
                s.perturbation = PerturbationSpec{};
            continue;
        }
        check(!section.empty(), line_no, "entry outside any section");
        const auto eq = body.find('=');
        if (section == "prices" && eq == std::string_view::npos) {
            // Bare comma-separated price rows; several rows concatenate.
            if (!prices_seen)
                s.prices.prices.clear();
            for (double v : parse_list({line_no, "prices", std::string(body)}))
                s.prices.prices.push_back(v);
            prices_seen = true;
            continue;
        }
        check(eq != std::string_view::npos, line_no, "expected 'key = value'");
        Entry e{line_no, std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1)))};
        check(!e.key.empty(), line_no, "empty key");

        if (section == "scenario") {
            apply_scenario_key(s, e);
        } else if (section == "prices") {
            if (e.key == "id")
                s.prices.id = e.value;
            else if (e.key == "values") {
                s.prices.prices = parse_list(e);
                prices_seen = true;
            } else
                unknown(e, "prices");
        } else if (section == "sources") {
            const auto dot = e.key.rfind('.');
            check(dot != std::string::npos && dot > 0, line_no, "source keys look like '<id>.ei_trans'");
            const std::string id = e.key.substr(0, dot);
            const std::string field = e.key.substr(dot + 1);
            const double v = parse_number(e);
            if (field == "ei_trans")
                s.transmission_eis[id] = v;
            else if (field == "ei_treat")
                s.treatment_eis[id] = v;
            else if (field == "target_fraction") {
                s.target_fractions[id] = v;
                fractions_line = line_no;
            } else
                unknown(e, "sources");
            check(v >= 0.0, line_no, "source values must be non-negative");
        } else if (section == "elevation_offsets") {
            const double v = parse_number(e);
            for (auto id : detail::split(e.key, ','))
                s.elevation_offsets[std::string(id)] = v;
        } else if (section == "ga") {
            apply_ga_key(s.ga, e);
        } else if (section == "perturbation") {
            apply_perturbation_key(*s.perturbation, e);
        }
    }

    if (prices_section && !prices_seen && s.prices.prices.empty())
        throw ParseError(prices_line, "missing price series in [prices]");
    if (!s.prices.prices.empty()) {
        check(s.prices.prices.size() == 24, prices_line, "price series must have 24 hourly values");
        if (s.prices.id.empty())
            s.prices.id = "prices";
    }
    if (!s.target_fractions.empty()) {
        double sum = 0.0;
        for (const auto& [id, f] : s.target_fractions)
            sum += f;
        check(std::abs(sum - 1.0) <= 1e-9, fractions_line,
              "target fractions sum to " + detail::format_double(sum) + ", not 1");
    }
    check(s.demand_multiplier > 0.0, 0, "demand_multiplier must be positive");
    check(s.roughness_multiplier > 0.0, 0, "roughness_multiplier must be positive");
    const GAConfig& g = s.ga;
    check(g.population >= 1 && g.generations >= 1, 0, "GA population and generations must be positive");
    check(g.elites >= 0 && g.elites < g.parent_pool && g.parent_pool <= g.population, 0,
          "GA settings must satisfy elites < parent_pool <= population");
    check(g.mutation_prob >= 0.0 && g.mutation_prob <= 1.0, 0, "mutation_prob must lie in [0, 1]");
    check(g.mutation_max_pumps >= 1 && g.mutation_max_steps >= 1, 0, "mutation ranges must be at least 1");
    check(s.bep.samples >= 1 && s.bep.demand_min > 0.0 && s.bep.demand_min <= s.bep.demand_max, 0,
          "BEP sampling needs samples >= 1 and 0 < demand_min <= demand_max");
    if (s.perturbation) {
        check(s.perturbation->repeats >= 1 && s.perturbation->n_consumers >= 1, 0,
              "perturbation needs repeats >= 1 and n_consumers >= 1");
        for (double l : s.perturbation->levels)
            check(l >= 0.0 && l < 1.0, 0, "perturbation levels must lie in [0, 1)");
    }
    s.ga.rng_seed = s.seed;
    return s;
}

ScenarioSpec read_scenario_file(const std::filesystem::path& path, const ScenarioSpec& base)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError(0, "cannot open scenario file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), base);
}

void require_runnable(const ScenarioSpec& spec)
{
    if (spec.prices.prices.size() != 24)
        throw ParseError(0, "scenario '" + spec.name + "' has no 24-value price series");
}

Network apply_scenario(const Network& net, const ScenarioSpec& spec)
{
    Network out = net;
    for (auto& j : out.junctions)
        j.base_demand *= spec.demand_multiplier;
    for (auto& p : out.pipes)
        p.roughness_coeff /= spec.roughness_multiplier;
    if (spec.start_hour)
        out.horizon_start_hour = *spec.start_hour;

    for (const auto& [id, offset] : spec.elevation_offsets) {
        bool found = false;
        for (auto& j : out.junctions)
            if (j.id == id) {
                j.elevation += offset;
                found = true;
            }
        for (auto& t : out.tanks)
            if (t.id == id) {
                t.elevation += offset;
                found = true;
            }
        for (auto& r : out.reservoirs)
            if (r.id == id) {
                r.head += offset;
                found = true;
            }
        if (!found)
            throw std::invalid_argument("elevation offset for unknown node '" + id + "'");
    }

    auto source = [&](const std::string& id) -> InjectionPoint& {
        for (auto& r : out.reservoirs)
            if (r.id == id)
                return r;
        throw std::invalid_argument("scenario names unknown injection point '" + id + "'");
    };
    for (const auto& [id, v] : spec.transmission_eis)
        source(id).transmission_ei = v;
    for (const auto& [id, v] : spec.treatment_eis)
        source(id).treatment_ei = v;
    for (const auto& [id, v] : spec.target_fractions)
        source(id).target_fraction = v;
    if (!spec.target_fractions.empty()) {
        double sum = 0.0;
        for (const auto& r : out.reservoirs)
            sum += r.target_fraction;
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("target fractions over all injection points do not sum to 1");
    }
    return out;
}

}  // namespace mei
