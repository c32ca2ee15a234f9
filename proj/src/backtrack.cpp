#include "mei/backtrack.hpp"

#include "mei/units.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <queue>
#include <stdexcept>

namespace mei {

FlowSnapshot build_flow_snapshot(const HydraulicState& state, const Network& net, double flow_epsilon)
{
    const NetworkIndex idx(net);
    const int nj = idx.junction_count();
    const int nr = idx.reservoir_count();
    const int nt = idx.tank_count();
    FlowSnapshot snap;
    snap.time_index = state.time_index;
    snap.dt_hours = state.dt_hours;
    snap.node_count = idx.node_count();
    snap.inflow.setZero(snap.node_count);
    snap.withdrawal.setZero(snap.node_count);
    snap.injection.setZero(nr + nt);
    for (int r = 0; r < nr; ++r)
        snap.source_node.push_back(idx.reservoir_node(r));
    for (int t = 0; t < nt; ++t)
        snap.source_node.push_back(idx.tank_node(t));

    for (int l = 0; l < idx.link_count(); ++l) {
        const double q = state.link_flows[l];
        if (std::abs(q) <= flow_epsilon)
            continue;
        FlowEdge e;
        e.link = l;
        e.from = q > 0.0 ? idx.link_from(l) : idx.link_to(l);
        e.to = q > 0.0 ? idx.link_to(l) : idx.link_from(l);
        e.flow = std::abs(q);
        e.h = state.link_energy_head[l];
        e.pump = idx.link_kind(l) == LinkKind::pump;
        snap.inflow[e.to] += e.flow;
        snap.edges.push_back(e);
    }
    for (int j = 0; j < nj; ++j)
        snap.withdrawal[j] = state.junction_demands[j];
    for (int r = 0; r < nr; ++r) {
        const double out = state.reservoir_outflow[r];
        if (out > flow_epsilon)
            snap.injection[r] = out;
        else if (out < -flow_epsilon)
            snap.withdrawal[idx.reservoir_node(r)] = -out;
    }
    for (int t = 0; t < nt; ++t) {
        const double net_in = state.tank_net_inflow[t];
        if (net_in < -flow_epsilon)
            snap.injection[nr + t] = -net_in;
        else if (net_in > flow_epsilon)
            snap.withdrawal[idx.tank_node(t)] = net_in;
    }
    for (int s = 0; s < nr + nt; ++s)
        if (snap.injection[s] > 0.0) {
            snap.inflow[snap.source_node[static_cast<std::size_t>(s)]] += snap.injection[s];
            snap.active_sources.push_back(s);
        }
    return snap;
}

namespace {

// Kahn order of the oriented graph; empty when it has a directed cycle.
std::vector<int> topological_order(const FlowSnapshot& snap, std::vector<std::vector<int>>& in_edges)
{
    const int n = snap.node_count;
    in_edges.assign(static_cast<std::size_t>(n), {});
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    std::vector<int> indeg(static_cast<std::size_t>(n), 0);
    for (std::size_t e = 0; e < snap.edges.size(); ++e) {
        const auto& ed = snap.edges[e];
        in_edges[static_cast<std::size_t>(ed.to)].push_back(static_cast<int>(e));
        out[static_cast<std::size_t>(ed.from)].push_back(ed.to);
        ++indeg[static_cast<std::size_t>(ed.to)];
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 0; v < n; ++v)
        if (indeg[static_cast<std::size_t>(v)] == 0)
            ready.push(v);
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    while (!ready.empty()) {
        const int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int w : out[static_cast<std::size_t>(v)])
            if (--indeg[static_cast<std::size_t>(w)] == 0)
                ready.push(w);
    }
    if (static_cast<int>(order.size()) != n)
        order.clear();
    return order;
}

// I - A with A_jk = Q_kj / Q_k, shared by the fraction and head solves.
Eigen::SparseMatrix<double> mixing_operator(const FlowSnapshot& snap)
{
    std::vector<Eigen::Triplet<double>> trip;
    for (int v = 0; v < snap.node_count; ++v)
        trip.emplace_back(v, v, 1.0);
    for (const auto& e : snap.edges)
        if (snap.inflow[e.from] > 0.0)
            trip.emplace_back(e.to, e.from, -e.flow / snap.inflow[e.from]);
    Eigen::SparseMatrix<double> m(snap.node_count, snap.node_count);
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

void check_fed(const FlowSnapshot& snap, int node, const std::string& what)
{
    bool has_out = false;
    for (const auto& e : snap.edges)
        has_out = has_out || e.from == node;
    if (has_out && !(snap.inflow[node] > 0.0))
        throw std::runtime_error("node index " + std::to_string(node) + " " + what);
}

}  // namespace

FractionMatrix solve_fractions(const FlowSnapshot& snap)
{
    const int ns = static_cast<int>(snap.source_node.size());
    const int n = snap.node_count;
    // W = r * Q_j, the inflow rate of each source's water.
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ns, n);
    std::vector<std::vector<int>> in_edges;
    const std::vector<int> order = topological_order(snap, in_edges);
    if (!order.empty()) {
        for (int v : order) {
            check_fed(snap, v, "sends flow but receives none");
            for (int s : snap.active_sources)
                if (snap.source_node[static_cast<std::size_t>(s)] == v)
                    w(s, v) += snap.injection[s];
            for (int e : in_edges[static_cast<std::size_t>(v)]) {
                const auto& ed = snap.edges[static_cast<std::size_t>(e)];
                w.col(v) += w.col(ed.from) * (ed.flow / snap.inflow[ed.from]);
            }
        }
    } else {
        for (int v = 0; v < n; ++v)
            check_fed(snap, v, "sends flow but receives none");
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(mixing_operator(snap));
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("flow cycle without a source: mixing system is singular");
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, ns);
        for (int s : snap.active_sources)
            rhs(snap.source_node[static_cast<std::size_t>(s)], s) += snap.injection[s];
        w = lu.solve(rhs).transpose();
    }
    FractionMatrix r = Eigen::MatrixXd::Zero(ns, n);
    for (int v = 0; v < n; ++v) {
        if (!(snap.inflow[v] > 0.0))
            continue;
        r.col(v) = w.col(v) / snap.inflow[v];
        if (ns > 0 && std::abs(r.col(v).sum() - 1.0) > 1e-6)
            throw std::runtime_error("node index " + std::to_string(v) + " receives water no source accounts for");
    }
    return r;
}

HeadMatrix solve_head_accumulation(const FlowSnapshot& snap, const FractionMatrix& r)
{
    const int ns = static_cast<int>(r.rows());
    const int n = snap.node_count;
    // G = W * H, the head-weighted inflow of each source's water.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(ns, n);
    std::vector<std::vector<int>> in_edges;
    const std::vector<int> order = topological_order(snap, in_edges);
    if (!order.empty()) {
        for (int v : order)
            for (int e : in_edges[static_cast<std::size_t>(v)]) {
                const auto& ed = snap.edges[static_cast<std::size_t>(e)];
                const double share = ed.flow / snap.inflow[ed.from];
                g.col(v) += share * g.col(ed.from) + (ed.flow * ed.h) * r.col(ed.from);
            }
    } else {
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, ns);
        for (const auto& ed : snap.edges)
            rhs.row(ed.to) += (ed.flow * ed.h) * r.col(ed.from).transpose();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(mixing_operator(snap));
        if (lu.info() != Eigen::Success)
            throw std::runtime_error("flow cycle without a source: mixing system is singular");
        g = lu.solve(rhs).transpose();
    }
    HeadMatrix h = Eigen::MatrixXd::Zero(ns, n);
    for (int v = 0; v < n; ++v)
        for (int s = 0; s < ns; ++s) {
            const double wv = r(s, v) * snap.inflow[v];
            if (wv > 0.0)
                h(s, v) = std::max(g(s, v) / wv, 0.0);
        }
    return h;
}

TankEnergyState resolve_tank_ei(const std::vector<FlowSnapshot>& snapshots, const std::vector<FractionMatrix>& r,
                                const std::vector<HeadMatrix>& heads,
                                const std::vector<SourceIntensity>& reservoir_eis)
{
    const int nr = static_cast<int>(reservoir_eis.size());
    const int steps = static_cast<int>(snapshots.size());
    const int ns = steps > 0 ? static_cast<int>(snapshots.front().source_node.size()) : nr;
    const int nt = ns - nr;
    TankEnergyState ts;
    ts.charge.setZero(nt, steps);
    ts.volume.setZero(nt);
    ts.intensity.assign(static_cast<std::size_t>(nt), SourceIntensity{});
    if (nt == 0)
        return ts;

    // Rows: x_n - sum_m B_nm x_m = b_n, one right-hand side per component.
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nt, nt);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nt, 3);
    for (int s = 0; s < steps; ++s) {
        const FlowSnapshot& snap = snapshots[static_cast<std::size_t>(s)];
        for (int t = 0; t < nt; ++t) {
            const int node = snap.source_node[static_cast<std::size_t>(nr + t)];
            const double c = snap.withdrawal[node];
            ts.charge(t, s) = c;
            ts.volume[t] += c * snap.dt_hours;
        }
    }
    for (int s = 0; s < steps; ++s) {
        const FlowSnapshot& snap = snapshots[static_cast<std::size_t>(s)];
        const auto& rs = r[static_cast<std::size_t>(s)];
        const auto& hs = heads[static_cast<std::size_t>(s)];
        for (int t = 0; t < nt; ++t) {
            if (!(ts.volume[t] > 0.0) || !(ts.charge(t, s) > 0.0))
                continue;
            const int node = snap.source_node[static_cast<std::size_t>(nr + t)];
            const double weight = ts.charge(t, s) * snap.dt_hours / ts.volume[t];
            for (int i = 0; i < ns; ++i) {
                if (i == nr + t)
                    continue;
                const double ri = rs(i, node);
                if (ri == 0.0)
                    continue;
                b(t, 2) += weight * ri * mei_dist(hs(i, node));
                if (i < nr) {
                    b(t, 0) += weight * ri * reservoir_eis[static_cast<std::size_t>(i)].transmission;
                    b(t, 1) += weight * ri * reservoir_eis[static_cast<std::size_t>(i)].treatment;
                } else {
                    a(t, i - nr) -= weight * ri;
                }
            }
        }
    }
    for (int t = 0; t < nt; ++t)
        if (!(ts.volume[t] > 0.0))
            ts.warnings.push_back("tank " + std::to_string(t) + " never charges during the horizon; its energy "
                                  "intensity is set to 0");

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) {
        std::string list;
        for (int t = 0; t < nt; ++t)
            if (std::abs(a.row(t).sum()) < 1e-12)
                list += (list.empty() ? "" : ", ") + std::to_string(t);
        throw std::runtime_error("tank energy intensities are undetermined: tanks " + list +
                                 " are charged only from each other");
    }
    const Eigen::MatrixXd x = lu.solve(b);
    for (int t = 0; t < nt; ++t) {
        auto& si = ts.intensity[static_cast<std::size_t>(t)];
        si.transmission = std::max(x(t, 0), 0.0);
        si.treatment = std::max(x(t, 1), 0.0);
        si.distribution = std::max(x(t, 2), 0.0);
    }
    return ts;
}

MEIReport assemble_mei(const std::vector<FlowSnapshot>& snapshots, const std::vector<FractionMatrix>& r,
                       const std::vector<HeadMatrix>& heads, const std::vector<SourceIntensity>& source_eis)
{
    MEIReport rep;
    rep.steps = static_cast<int>(snapshots.size());
    const int n = rep.steps > 0 ? snapshots.front().node_count : 0;
    const int ns = static_cast<int>(source_eis.size());
    const double nan = kUndefined;
    rep.mei.setConstant(rep.steps, n, nan);
    rep.transmission.setConstant(rep.steps, n, nan);
    rep.treatment.setConstant(rep.steps, n, nan);
    rep.distribution.setConstant(rep.steps, n, nan);
    rep.pre_injection.setConstant(rep.steps, n, nan);
    rep.demand.setZero(rep.steps, n);
    rep.inflow.setZero(rep.steps, n);
    rep.dt_hours.setOnes(rep.steps);
    rep.fractions = r;
    rep.heads = heads;
    rep.source_intensity = source_eis;
    for (int s = 0; s < rep.steps; ++s) {
        const FlowSnapshot& snap = snapshots[static_cast<std::size_t>(s)];
        const auto& rs = r[static_cast<std::size_t>(s)];
        const auto& hs = heads[static_cast<std::size_t>(s)];
        rep.dt_hours[s] = snap.dt_hours;
        rep.inflow.row(s) = snap.inflow.transpose();
        for (int v = 0; v < n; ++v) {
            if (!(snap.inflow[v] > 0.0))
                continue;
            double trans = 0.0, treat = 0.0, dist = 0.0, pre = 0.0;
            for (int i = 0; i < ns; ++i) {
                const double ri = rs(i, v);
                if (ri == 0.0)
                    continue;
                const SourceIntensity& ei = source_eis[static_cast<std::size_t>(i)];
                trans += ri * ei.transmission;
                treat += ri * ei.treatment;
                dist += ri * (ei.distribution + mei_dist(hs(i, v)));
                pre += ri * ei.total();
            }
            rep.transmission(s, v) = trans;
            rep.treatment(s, v) = treat;
            rep.distribution(s, v) = dist;
            rep.pre_injection(s, v) = pre;
            double total = 0.0;
            for (int i = 0; i < ns; ++i)
                if (rs(i, v) != 0.0)
                    total += rs(i, v) * (source_eis[static_cast<std::size_t>(i)].total() + mei_dist(hs(i, v)));
            rep.mei(s, v) = total;
        }
    }
    return rep;
}

MEIReport backtrack(const Network& net, const SimulationResult& sim, double flow_epsilon)
{
    const NetworkIndex idx(net);
    std::vector<FlowSnapshot> snaps;
    std::vector<FractionMatrix> rs;
    std::vector<HeadMatrix> hs;
    snaps.reserve(sim.states.size());
    for (const auto& st : sim.states) {
        snaps.push_back(build_flow_snapshot(st, net, flow_epsilon));
        try {
            rs.push_back(solve_fractions(snaps.back()));
        } catch (const std::runtime_error& e) {
            // Swap the node index for its id.
            std::string msg = e.what();
            const std::string key = "node index ";
            if (msg.rfind(key, 0) == 0) {
                const auto sp = msg.find(' ', key.size());
                const int node = std::stoi(msg.substr(key.size(), sp - key.size()));
                msg = "node " + idx.node_id(node) + msg.substr(sp);
            }
            throw std::runtime_error("step " + std::to_string(st.time_index) + ": " + msg);
        }
        hs.push_back(solve_head_accumulation(snaps.back(), rs.back()));
    }
    std::vector<SourceIntensity> res_eis;
    for (const auto& r : net.reservoirs)
        res_eis.push_back({r.transmission_ei, r.treatment_ei, 0.0});
    TankEnergyState tanks;
    try {
        tanks = resolve_tank_ei(snaps, rs, hs, res_eis);
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        for (int t = idx.tank_count() - 1; t >= 0; --t) {
            const std::string num = std::to_string(t);
            for (auto p = msg.find(num); p != std::string::npos; p = msg.find(num, p + 1)) {
                const bool left = p == 0 || msg[p - 1] == ' ';
                const bool right = p + num.size() == msg.size() || msg[p + num.size()] == ',' ||
                                   msg[p + num.size()] == ' ';
                if (left && right) {
                    msg.replace(p, num.size(), net.tanks[static_cast<std::size_t>(t)].id);
                    break;
                }
            }
        }
        throw std::runtime_error(msg);
    }
    for (auto& w : tanks.warnings) {
        const auto p = w.find(' ', 5);
        const int t = std::stoi(w.substr(5, p - 5));
        w = "tank " + net.tanks[static_cast<std::size_t>(t)].id + w.substr(p);
    }
    std::vector<SourceIntensity> all = res_eis;
    all.insert(all.end(), tanks.intensity.begin(), tanks.intensity.end());
    MEIReport rep = assemble_mei(snaps, rs, hs, all);
    rep.tanks = std::move(tanks);
    rep.warnings = rep.tanks.warnings;
    for (int v = 0; v < idx.node_count(); ++v)
        rep.node_ids.push_back(idx.node_id(v));
    for (const auto& r : net.reservoirs)
        rep.source_ids.push_back(r.id);
    for (const auto& t : net.tanks)
        rep.source_ids.push_back(t.id);
    for (int s = 0; s < rep.steps; ++s)
        for (int j = 0; j < idx.junction_count(); ++j)
            rep.demand(s, j) = sim.states[static_cast<std::size_t>(s)].junction_demands[j];
    return rep;
}

DailyMEI daily_average_mei(const MEIReport& report)
{
    const auto n = report.demand.cols();
    DailyMEI d;
    d.node.setConstant(n, kUndefined);
    d.volume.setZero(n);
    double sys_e = 0.0;
    double sys_v = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
        double e = 0.0;
        double vol = 0.0;
        for (int s = 0; s < report.steps; ++s) {
            const double q = report.demand(s, v) * report.dt_hours[s];
            if (q > 0.0) {
                e += report.mei(s, v) * q;
                vol += q;
            }
        }
        d.volume[v] = vol;
        if (vol > 0.0)
            d.node[v] = e / vol;
        sys_e += e;
        sys_v += vol;
    }
    if (sys_v > 0.0)
        d.system = sys_e / sys_v;
    return d;
}

EnergyClosure energy_closure(const MEIReport& report, const SimulationResult& sim, const Network& net)
{
    const NetworkIndex idx(net);
    const int nr = idx.reservoir_count();
    const int nt = idx.tank_count();
    EnergyClosure c;
    c.pump_energy = sim.energy_per_step.sum();
    for (int s = 0; s < report.steps; ++s) {
        const double dt = report.dt_hours[s];
        const HydraulicState& st = sim.states[static_cast<std::size_t>(s)];
        for (int j = 0; j < idx.junction_count(); ++j) {
            const double q = report.demand(s, j);
            if (q > 0.0)
                c.delivered += report.mei(s, j) * q * dt;
        }
        for (int l = 0; l < idx.link_count(); ++l)
            if (idx.link_kind(l) != LinkKind::pump)
                c.dissipation += std::abs(st.link_flows[l]) * mei_dist(st.link_energy_head[l]) * dt;
        for (int r = 0; r < nr; ++r) {
            const double out = st.reservoir_outflow[r];
            if (out > 0.0)
                c.pre_injection += out * dt * report.source_intensity[static_cast<std::size_t>(r)].total();
            else if (out < 0.0)
                c.absorbed += -out * dt * report.mei(s, idx.reservoir_node(r));
        }
        for (int t = 0; t < nt; ++t) {
            const double net_in = st.tank_net_inflow[t];
            const double x = report.source_intensity[static_cast<std::size_t>(nr + t)].total();
            c.tank_storage -= net_in * dt * x;
        }
    }
    c.residual = c.delivered - (c.pump_energy + c.dissipation + c.pre_injection + c.tank_storage - c.absorbed);
    const double scale = std::max({std::abs(c.delivered), c.pump_energy + c.dissipation + c.pre_injection, 1e-300});
    c.relative = std::abs(c.residual) / scale;
    c.consumption_gap = c.delivered - (c.pump_energy + c.pre_injection);
    return c;
}

double max_fraction_error(const MEIReport& report)
{
    double worst = 0.0;
    for (int s = 0; s < report.steps; ++s) {
        const auto& r = report.fractions[static_cast<std::size_t>(s)];
        for (Eigen::Index v = 0; v < r.cols(); ++v)
            if (report.inflow(s, v) > 0.0)
                worst = std::max(worst, std::abs(r.col(v).sum() - 1.0));
    }
    return worst;
}

}  // namespace mei
