#include "mei/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>

namespace mei {

double Tank::area() const
{
    return std::numbers::pi * diameter * diameter / 4.0;
}

double Pump::efficiency(double flow) const
{
    return eff_curve ? (*eff_curve)(flow) : bep_efficiency;
}

const Pattern* Network::find_pattern(const std::string& id) const
{
    for (const auto& p : patterns)
        if (p.id == id)
            return &p;
    return nullptr;
}

double Network::demand(std::size_t j, int hour) const
{
    const Junction& junc = junctions[j];
    const std::string& pid = junc.pattern_id.empty() ? default_pattern_id : junc.pattern_id;
    const Pattern* pat = pid.empty() ? nullptr : find_pattern(pid);
    if (pat == nullptr || pat->multipliers.empty())
        return junc.base_demand;
    const auto n = static_cast<int>(pat->multipliers.size());
    return junc.base_demand * pat->multipliers[static_cast<std::size_t>(((hour % n) + n) % n)];
}

bool Network::is_consumer(std::size_t j) const
{
    for (int h = 0; h < 24; ++h)
        if (demand(j, h) > 0.0)
            return true;
    return false;
}

NetworkIndex::NetworkIndex(const Network& net)
    : n_junctions_(static_cast<int>(net.junctions.size())),
      n_reservoirs_(static_cast<int>(net.reservoirs.size())),
      n_tanks_(static_cast<int>(net.tanks.size())),
      n_pipes_(static_cast<int>(net.pipes.size())),
      n_pumps_(static_cast<int>(net.pumps.size())),
      n_valves_(static_cast<int>(net.valves.size()))
{
    auto add_node = [this](const std::string& id, double elevation) {
        node_lookup_.emplace(id, static_cast<int>(node_ids_.size()));
        node_ids_.push_back(id);
        node_elevation_.push_back(elevation);
    };
    for (const auto& j : net.junctions)
        add_node(j.id, j.elevation);
    for (const auto& r : net.reservoirs)
        add_node(r.id, r.head);
    for (const auto& t : net.tanks)
        add_node(t.id, t.elevation);

    auto add_link = [this](const std::string& id, const std::string& from, const std::string& to) {
        link_lookup_.emplace(id, static_cast<int>(link_ids_.size()));
        link_ids_.push_back(id);
        link_from_.push_back(find_node(from).value_or(-1));
        link_to_.push_back(find_node(to).value_or(-1));
    };
    for (const auto& p : net.pipes)
        add_link(p.id, p.from_node, p.to_node);
    for (const auto& p : net.pumps)
        add_link(p.id, p.from_node, p.to_node);
    for (const auto& v : net.valves)
        add_link(v.id, v.from_node, v.to_node);
}

NodeKind NetworkIndex::node_kind(int node) const
{
    if (node < n_junctions_)
        return NodeKind::junction;
    if (node < n_junctions_ + n_reservoirs_)
        return NodeKind::reservoir;
    return NodeKind::tank;
}

int NetworkIndex::local_index(int node) const
{
    switch (node_kind(node)) {
    case NodeKind::junction: return node;
    case NodeKind::reservoir: return node - n_junctions_;
    case NodeKind::tank: return node - n_junctions_ - n_reservoirs_;
    }
    return -1;
}

LinkKind NetworkIndex::link_kind(int link) const
{
    if (link < n_pipes_)
        return LinkKind::pipe;
    if (link < n_pipes_ + n_pumps_)
        return LinkKind::pump;
    return LinkKind::valve;
}

int NetworkIndex::local_link_index(int link) const
{
    switch (link_kind(link)) {
    case LinkKind::pipe: return link;
    case LinkKind::pump: return link - n_pipes_;
    case LinkKind::valve: return link - n_pipes_ - n_pumps_;
    }
    return -1;
}

std::optional<int> NetworkIndex::find_node(const std::string& id) const
{
    const auto it = node_lookup_.find(id);
    if (it == node_lookup_.end())
        return std::nullopt;
    return it->second;
}

std::optional<int> NetworkIndex::find_link(const std::string& id) const
{
    const auto it = link_lookup_.find(id);
    if (it == link_lookup_.end())
        return std::nullopt;
    return it->second;
}

namespace {

void check_unique(const std::vector<std::string>& ids, const char* what, std::vector<Violation>& out)
{
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second)
            out.push_back({id, std::string("duplicate ") + what + " id"});
}

template <typename T>
std::vector<std::string> ids_of(const std::vector<T>& items)
{
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& x : items)
        ids.push_back(x.id);
    return ids;
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

std::vector<Violation> validate_network(const Network& net)
{
    std::vector<Violation> v;

    std::vector<std::string> node_ids = ids_of(net.junctions);
    for (const auto& id : ids_of(net.reservoirs))
        node_ids.push_back(id);
    for (const auto& id : ids_of(net.tanks))
        node_ids.push_back(id);
    check_unique(node_ids, "node", v);
    std::vector<std::string> link_ids = ids_of(net.pipes);
    for (const auto& id : ids_of(net.pumps))
        link_ids.push_back(id);
    for (const auto& id : ids_of(net.valves))
        link_ids.push_back(id);
    check_unique(link_ids, "link", v);
    check_unique(ids_of(net.patterns), "pattern", v);

    if (net.horizon_start_hour < 0 || net.horizon_start_hour > 23)
        v.push_back({"network", "horizon start hour outside 0-23"});
    if (net.horizon_steps <= 0)
        v.push_back({"network", "horizon must have at least one step"});
    if (!net.default_pattern_id.empty() && net.find_pattern(net.default_pattern_id) == nullptr)
        v.push_back({"network", "default pattern '" + net.default_pattern_id + "' does not exist"});

    for (const auto& j : net.junctions) {
        if (!finite(j.elevation))
            v.push_back({j.id, "elevation not finite"});
        if (!(j.base_demand >= 0.0))
            v.push_back({j.id, "negative base demand"});
        if (!j.pattern_id.empty() && net.find_pattern(j.pattern_id) == nullptr)
            v.push_back({j.id, "pattern '" + j.pattern_id + "' does not exist"});
    }
    for (const auto& t : net.tanks) {
        if (!(t.min_level <= t.init_level && t.init_level <= t.max_level))
            v.push_back({t.id, "tank levels must satisfy min <= init <= max"});
        if (!(t.diameter > 0.0))
            v.push_back({t.id, "tank diameter must be positive"});
        if (!finite(t.elevation))
            v.push_back({t.id, "elevation not finite"});
    }
    double fraction_sum = 0.0;
    for (const auto& r : net.reservoirs) {
        if (!finite(r.head))
            v.push_back({r.id, "head not finite"});
        if (!(r.transmission_ei >= 0.0) || !(r.treatment_ei >= 0.0))
            v.push_back({r.id, "energy intensities must be non-negative"});
        if (!(r.target_fraction >= 0.0 && r.target_fraction <= 1.0))
            v.push_back({r.id, "target fraction outside [0, 1]"});
        fraction_sum += r.target_fraction;
    }
    if (!net.reservoirs.empty() && std::abs(fraction_sum - 1.0) > 1e-9)
        v.push_back({"network", "injection target fractions do not sum to 1"});

    const NetworkIndex index(net);
    auto check_ends = [&](const std::string& id, const std::string& from, const std::string& to) {
        if (!index.find_node(from))
            v.push_back({id, "dangling reference to node '" + from + "'"});
        if (!index.find_node(to))
            v.push_back({id, "dangling reference to node '" + to + "'"});
        if (from == to)
            v.push_back({id, "link connects a node to itself"});
    };
    for (const auto& p : net.pipes) {
        check_ends(p.id, p.from_node, p.to_node);
        if (!(p.length > 0.0) || !(p.diameter > 0.0) || !(p.roughness_coeff > 0.0))
            v.push_back({p.id, "pipe length, diameter and roughness must be positive"});
    }
    for (const auto& p : net.pumps) {
        check_ends(p.id, p.from_node, p.to_node);
        if (!p.hq_curve.is_decreasing())
            v.push_back({p.id, "head curve must be strictly decreasing"});
        if (p.eff_curve) {
            const auto& e = *p.eff_curve;
            if (!(e.bep_efficiency > 0.0 && e.bep_efficiency <= 1.0) || !(e.floor > 0.0) || !(e.bep_flow > 0.0))
                v.push_back({p.id, "efficiency curve outside (0, 1]"});
        }
        if (!(p.bep_efficiency > 0.0 && p.bep_efficiency <= 1.0))
            v.push_back({p.id, "efficiency outside (0, 1]"});
    }
    for (const auto& valve : net.valves) {
        check_ends(valve.id, valve.from_node, valve.to_node);
        if (!(valve.setting >= 0.0))
            v.push_back({valve.id, "PRV setting must be non-negative"});
        if (!(valve.diameter > 0.0))
            v.push_back({valve.id, "valve diameter must be positive"});
        const auto to = index.find_node(valve.to_node);
        if (to && index.node_kind(*to) != NodeKind::junction)
            v.push_back({valve.id, "PRV must discharge into a junction"});
    }
    for (const auto& p : net.patterns) {
        if (static_cast<int>(p.multipliers.size()) != kDefaultHorizonSteps)
            v.push_back({p.id, "pattern must have exactly 24 hourly multipliers"});
        for (double m : p.multipliers)
            if (!(m >= 0.0)) {
                v.push_back({p.id, "negative pattern multiplier"});
                break;
            }
    }

    // Reachability of every consumer from some injection point over links that
    // are not permanently closed.
    const int n = index.node_count();
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int l = 0; l < index.link_count(); ++l) {
        const int a = index.link_from(l), b = index.link_to(l);
        if (a < 0 || b < 0)
            continue;
        if (index.link_kind(l) == LinkKind::pipe &&
            net.pipes[static_cast<std::size_t>(l)].initial_status == LinkStatus::closed)
            continue;
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> q;
    for (int r = 0; r < index.reservoir_count(); ++r) {
        seen[static_cast<std::size_t>(index.reservoir_node(r))] = 1;
        q.push(index.reservoir_node(r));
    }
    while (!q.empty()) {
        const int a = q.front();
        q.pop();
        for (int b : adj[static_cast<std::size_t>(a)])
            if (!seen[static_cast<std::size_t>(b)]) {
                seen[static_cast<std::size_t>(b)] = 1;
                q.push(b);
            }
    }
    for (std::size_t j = 0; j < net.junctions.size(); ++j)
        if (net.is_consumer(j) && !seen[j])
            v.push_back({net.junctions[j].id, "consumer not reachable from any injection point"});

    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace mei
