#include "mei/hydraulics.hpp"

#include "mei/units.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

namespace mei {

namespace {

// Why a link is closed; decides which status rules may reopen it.
enum Closure : std::uint8_t {
    kNotClosed,
    kInitial,
    kSchedule,
    kCheckValve,
    kReverseFlow,
    kTankFull,
    kTankEmpty,
    kValve,
};

constexpr double kFlowTiny = 1e-6;      // m^3/h
constexpr double kHeadTiny = 1e-6;      // m
constexpr double kOpenValveLinear = 1e-6;  // m per m^3/h across a fully open valve
constexpr double kHwExponent = 1.852;
constexpr int kDenseLimit = 400;
// Reduced systems up to this many junctions are factored densely.
constexpr int kDenseCoreLimit = 60;

constexpr int kNoInflow = 1;
constexpr int kNoOutflow = 2;

double minor_loss_coeff(double k, double diameter)
{
    // h = K v^2 / 2g with v from Q in m^3/h
    const double area = std::numbers::pi * diameter * diameter / 4.0;
    return k / (2.0 * kGravity * area * area * kSecondsPerHour * kSecondsPerHour);
}

struct Law {
    double h;   // head loss from -> to
    double dh;  // derivative wrt Q
};

}  // namespace

struct HydraulicSolver::LinkData {
    LinkKind kind = LinkKind::pipe;
    int from = -1;
    int to = -1;
    double r = 0.0;  // Hazen-Williams resistance, Q in m^3/h
    double m = 0.0;  // minor-loss coefficient
    const Pump* pump = nullptr;
    double prv_head = 0.0;  // downstream head an active PRV maintains
    bool check_valve = false;
    bool initially_closed = false;
    bool branch = false;  // dead-end pipe carrying a fixed subtree demand

    Law law(double q) const
    {
        switch (kind) {
        case LinkKind::pipe: {
            const double aq = std::abs(q);
            if (aq < kSmallFlow) {
                const double k = r * std::pow(kSmallFlow, kHwExponent - 1.0) + m * kSmallFlow;
                return {k * q, k};
            }
            const double p = r * std::pow(aq, kHwExponent - 1.0);
            return {(p + m * aq) * q, kHwExponent * p + 2.0 * m * aq};
        }
        case LinkKind::pump:
            return {-pump->hq_curve.gain(q), -pump->hq_curve.slope(q)};
        case LinkKind::valve: {
            const double aq = std::abs(q);
            return {m * aq * q + kOpenValveLinear * q, 2.0 * m * aq + kOpenValveLinear};
        }
        }
        return {0.0, 1.0};
    }
};

namespace {

// Head of any node given junction unknowns and boundary heads.
struct HeadView {
    const NetworkIndex& index;
    const Eigen::VectorXd& x;
    const SolveInput& in;

    double operator()(int node) const
    {
        const int nj = index.junction_count();
        const int nl = index.link_count();
        if (node < nj)
            return x[nl + node];
        const int nr = index.reservoir_count();
        if (node < nj + nr)
            return in.reservoir_heads[node - nj];
        return in.tank_heads[node - nj - nr];
    }
};

}  // namespace

// Reduced head system: its sparsity pattern depends only on the topology,
// so the fill-reducing ordering is computed once.
struct HydraulicSolver::Workspace {
    // Dead-end branches in pruning order (leaves first): leaf junction,
    // link, and the node the link hangs from.
    struct Branch {
        int leaf;
        int link;
        int parent;
    };
    std::vector<Branch> branches;
    std::vector<char> pruned;  // per junction
    std::vector<int> core;     // junctions left in the reduced system
    std::vector<int> core_of;  // junction -> position in core, or -1
    Eigen::MatrixXd dense;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Eigen::VectorXd subtree;   // demand carried into each pruned junction
    // Node-to-link incidence in compressed form, plus search scratch.
    std::vector<int> inc_start;
    std::vector<int> inc_link;
    std::vector<char> seen;
    std::vector<int> stack;
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::SparseMatrix<double> s;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;
};

HydraulicSolver::HydraulicSolver(HydraulicSolver&&) noexcept = default;
HydraulicSolver::~HydraulicSolver() = default;

HydraulicSolver::HydraulicSolver(const Network& net, SolverOptions options)
    : net_(net), index_(net), options_(options)
{
    const int nl = index_.link_count();
    links_.resize(static_cast<std::size_t>(nl));
    for (int l = 0; l < nl; ++l) {
        LinkData& d = links_[static_cast<std::size_t>(l)];
        d.kind = index_.link_kind(l);
        d.from = index_.link_from(l);
        d.to = index_.link_to(l);
        if (d.from < 0 || d.to < 0)
            throw std::invalid_argument("link " + index_.link_id(l) + " has a dangling endpoint");
        const int k = index_.local_link_index(l);
        switch (d.kind) {
        case LinkKind::pipe: {
            const Pipe& p = net.pipes[static_cast<std::size_t>(k)];
            d.r = hazen_williams_resistance(p.length, p.diameter, p.roughness_coeff);
            d.m = minor_loss_coeff(p.minor_loss, p.diameter);
            d.check_valve = p.has_check_valve;
            d.initially_closed = p.initial_status == LinkStatus::closed;
            break;
        }
        case LinkKind::pump:
            d.pump = &net.pumps[static_cast<std::size_t>(k)];
            break;
        case LinkKind::valve: {
            const PressureReducingValve& v = net.valves[static_cast<std::size_t>(k)];
            d.m = minor_loss_coeff(v.minor_loss, v.diameter);
            d.prv_head = index_.node_elevation(d.to) + v.setting;
            break;
        }
        }
    }
    tank_area_.resize(index_.tank_count());
    for (int t = 0; t < index_.tank_count(); ++t)
        tank_area_[t] = net.tanks[static_cast<std::size_t>(t)].area();
    work_ = std::make_unique<Workspace>();
    prune_branches();
    reset();
}

// Junctions reached through a single plain pipe take no part in the Newton
// system: the pipe's flow is the demand beyond it and the junction's head
// follows from its parent's.
void HydraulicSolver::prune_branches()
{
    const int nn = index_.node_count();
    const int nj = index_.junction_count();
    const int nl = index_.link_count();
    const int first_tank = nj + index_.reservoir_count();
    std::vector<std::vector<int>> incident(static_cast<std::size_t>(nn));
    for (int l = 0; l < nl; ++l) {
        incident[static_cast<std::size_t>(links_[static_cast<std::size_t>(l)].from)].push_back(l);
        incident[static_cast<std::size_t>(links_[static_cast<std::size_t>(l)].to)].push_back(l);
    }
    auto& w = *work_;
    w.inc_start.assign(1, 0);
    w.inc_link.clear();
    for (const auto& links : incident) {
        w.inc_link.insert(w.inc_link.end(), links.begin(), links.end());
        w.inc_start.push_back(static_cast<int>(w.inc_link.size()));
    }
    std::vector<int> degree(static_cast<std::size_t>(nn));
    for (int v = 0; v < nn; ++v)
        degree[static_cast<std::size_t>(v)] = static_cast<int>(incident[static_cast<std::size_t>(v)].size());
    std::vector<char> removed(static_cast<std::size_t>(nl), 0);
    w.pruned.assign(static_cast<std::size_t>(nj), 0);
    std::vector<int> queue;
    for (int j = 0; j < nj; ++j)
        if (degree[static_cast<std::size_t>(j)] == 1)
            queue.push_back(j);
    while (!queue.empty()) {
        const int j = queue.back();
        queue.pop_back();
        if (degree[static_cast<std::size_t>(j)] != 1)
            continue;
        int l = -1;
        for (int k : incident[static_cast<std::size_t>(j)])
            if (!removed[static_cast<std::size_t>(k)])
                l = k;
        LinkData& d = links_[static_cast<std::size_t>(l)];
        const int parent = d.from == j ? d.to : d.from;
        if (d.kind != LinkKind::pipe || d.check_valve || d.initially_closed || parent >= first_tank ||
            parent == j)
            continue;
        d.branch = true;
        removed[static_cast<std::size_t>(l)] = 1;
        w.pruned[static_cast<std::size_t>(j)] = 1;
        w.branches.push_back({j, l, parent});
        --degree[static_cast<std::size_t>(j)];
        if (--degree[static_cast<std::size_t>(parent)] == 1 && parent < nj)
            queue.push_back(parent);
    }
    // A parent pruned later may have been left with no link at all: that
    // happens only for a component without any fixed-head node.
    w.subtree.setZero(nj);
    w.core.clear();
    w.core_of.assign(static_cast<std::size_t>(nj), -1);
    for (int j = 0; j < nj; ++j)
        if (!w.pruned[static_cast<std::size_t>(j)]) {
            w.core_of[static_cast<std::size_t>(j)] = static_cast<int>(w.core.size());
            w.core.push_back(j);
        }
}

void HydraulicSolver::set_branch_flows(const SolveInput& in)
{
    auto& w = *work_;
    if (w.branches.empty())
        return;
    const int nj = index_.junction_count();
    w.subtree = in.junction_demands;
    for (const auto& b : w.branches) {
        const double q = w.subtree[b.leaf];
        x_[b.link] = links_[static_cast<std::size_t>(b.link)].to == b.leaf ? q : -q;
        if (b.parent < nj)
            w.subtree[b.parent] += q;
    }
}

void HydraulicSolver::recover_branch_heads(const SolveInput& in)
{
    const int nl = index_.link_count();
    const HeadView head{index_, x_, in};
    const auto& w = *work_;
    for (auto it = w.branches.rbegin(); it != w.branches.rend(); ++it) {
        if (isolated_[static_cast<std::size_t>(it->leaf)])
            continue;
        const LinkData& d = links_[static_cast<std::size_t>(it->link)];
        const double h = d.law(x_[it->link]).h;
        x_[nl + it->leaf] = d.to == it->leaf ? head(it->parent) - h : head(it->parent) + h;
    }
}

void HydraulicSolver::reset()
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    x_.resize(nl + nj);
    status_.assign(static_cast<std::size_t>(nl), LinkState::open);
    closed_by_.assign(static_cast<std::size_t>(nl), kNotClosed);
    isolated_.assign(static_cast<std::size_t>(nj), 0);
    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        double q = 0.0;
        switch (d.kind) {
        case LinkKind::pipe: {
            // 1 ft/s
            const double dia = net_.pipes[static_cast<std::size_t>(index_.local_link_index(l))].diameter;
            q = units::kFoot * std::numbers::pi / 4.0 * dia * dia * kSecondsPerHour;
            break;
        }
        case LinkKind::pump:
            q = d.pump->bep ? d.pump->bep->x()
                : d.pump->hq_curve.kind() == HeadCurve::Kind::design_point ? d.pump->hq_curve.design_flow()
                                                                             : 50.0;
            break;
        case LinkKind::valve:
            q = 10.0;
            status_[static_cast<std::size_t>(l)] = LinkState::active;
            break;
        }
        x_[l] = q;
        if (d.initially_closed) {
            status_[static_cast<std::size_t>(l)] = LinkState::closed;
            closed_by_[static_cast<std::size_t>(l)] = kInitial;
        }
    }
    double mean_head = 0.0;
    int fixed = 0;
    for (const auto& r : net_.reservoirs) {
        mean_head += r.head;
        ++fixed;
    }
    for (const auto& t : net_.tanks) {
        mean_head += t.elevation + t.init_level;
        ++fixed;
    }
    mean_head = fixed > 0 ? mean_head / fixed : 0.0;
    for (int j = 0; j < nj; ++j)
        x_[nl + j] = std::max(mean_head, index_.node_elevation(j));
    warm_ = false;
}


void HydraulicSolver::assemble(const SolveInput& in, const Eigen::VectorXd& x, Eigen::VectorXd& f,
                               bool with_jacobian)
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    const int n = nl + nj;
    f.setZero(n);
    if (with_jacobian)
        deriv_.setZero(nl);
    const HeadView head{index_, x, in};

    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        const LinkState s = status_[static_cast<std::size_t>(l)];
        if (d.branch) {
            if (with_jacobian)
                deriv_[l] = 1.0;
            continue;
        }
        if (s == LinkState::closed) {
            f[l] = x[l];
            if (with_jacobian)
                deriv_[l] = 1.0;
            continue;
        }
        if (s == LinkState::active) {
            f[l] = head(d.to) - d.prv_head;
            continue;
        }
        const Law law = d.law(x[l]);
        f[l] = head(d.from) - head(d.to) - law.h;
        if (with_jacobian) {
            double dh = law.dh;
            // Flat pump curves near shut-off would leave a near-zero pivot.
            if (d.kind == LinkKind::pump && std::abs(dh) < 1e-8)
                dh = dh < 0.0 ? -1e-8 : 1e-8;
            deriv_[l] = -dh;
        }
    }

    for (int j = 0; j < nj; ++j) {
        if (isolated_[static_cast<std::size_t>(j)]) {
            f[nl + j] = x[nl + j] - index_.node_elevation(j);
        } else {
            f[nl + j] = -in.junction_demands[j];
        }
    }
    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        if (d.to < nj && !isolated_[static_cast<std::size_t>(d.to)])
            f[nl + d.to] += x[l];
        if (d.from < nj && !isolated_[static_cast<std::size_t>(d.from)])
            f[nl + d.from] -= x[l];
    }
    for (const auto& b : work_->branches)
        f[nl + b.leaf] = 0.0;
}

double HydraulicSolver::residual_norm(const Eigen::VectorXd& f) const
{
    const int nl = index_.link_count();
    const double link = nl > 0 ? f.head(nl).cwiseAbs().maxCoeff() / options_.head_tolerance : 0.0;
    const int nj = index_.junction_count();
    const double node = nj > 0 ? f.tail(nj).cwiseAbs().maxCoeff() / options_.flow_tolerance : 0.0;
    return std::max(link, node);
}

// Eliminates the open-link flow corrections and solves for the junction
// head corrections alone. False when an active PRV or a vanishing link
// derivative needs the full system.
bool HydraulicSolver::reduced_step(const Eigen::VectorXd& f, Eigen::VectorXd& dx)
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    auto& w = *work_;
    const int nc = static_cast<int>(w.core.size());
    // Core index of a junction that takes part in the balance, else -1.
    auto balance = [&](int v) {
        if (v >= nj || isolated_[static_cast<std::size_t>(v)])
            return -1;
        return w.core_of[static_cast<std::size_t>(v)];
    };
    auto core = [&](int v) { return v < nj ? w.core_of[static_cast<std::size_t>(v)] : -1; };
    const bool dense = nc <= kDenseCoreLimit;
    if (dense)
        w.dense.setZero(nc, nc);
    else
        w.triplets.clear();
    auto add = [&](int r, int c, double v) {
        if (dense)
            w.dense(r, c) += v;
        else
            w.triplets.emplace_back(r, c, v);
    };
    Eigen::VectorXd rhs(nc);
    for (int c = 0; c < nc; ++c) {
        const int j = w.core[static_cast<std::size_t>(c)];
        rhs[c] = -f[nl + j];
        add(c, c, isolated_[static_cast<std::size_t>(j)] ? 1.0 : 0.0);
    }
    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        if (d.branch)
            continue;
        const LinkState st = status_[static_cast<std::size_t>(l)];
        if (st == LinkState::active)
            return false;
        const int bf = balance(d.from);
        const int bt = balance(d.to);
        // Continuity carries +dq at the downstream node, -dq upstream; closed
        // links still enter with zero weight to keep the pattern fixed.
        double g = 0.0;
        if (st == LinkState::closed) {
            if (bt >= 0)
                rhs[bt] += f[l];
            if (bf >= 0)
                rhs[bf] -= f[l];
        } else {
            const double dl = deriv_[l];
            if (!(std::abs(dl) > 1e-300))
                return false;
            // dq = (-f_l - dh_from + dh_to) / dl
            g = 1.0 / dl;
            if (bt >= 0)
                rhs[bt] += f[l] * g;
            if (bf >= 0)
                rhs[bf] -= f[l] * g;
        }
        const int cf = core(d.from);
        const int ct = core(d.to);
        const int rows[2] = {bf, bt};
        const double sign[2] = {-1.0, 1.0};
        for (int a = 0; a < 2; ++a) {
            if (rows[a] < 0)
                continue;
            if (cf >= 0)
                add(rows[a], cf, -sign[a] * g);
            if (ct >= 0)
                add(rows[a], ct, sign[a] * g);
        }
    }
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(nc);
    if (nc > 0 && dense) {
        w.lu.compute(w.dense);
        dc = w.lu.solve(rhs);
    } else if (nc > 0) {
        w.s.resize(nc, nc);
        w.s.setFromTriplets(w.triplets.begin(), w.triplets.end());
        if (!w.analyzed) {
            w.ldlt.analyzePattern(w.s);
            w.analyzed = true;
        }
        w.ldlt.factorize(w.s);
        if (w.ldlt.info() != Eigen::Success)
            return false;
        dc = w.ldlt.solve(rhs);
    }
    if (!dc.allFinite())
        return false;
    dx.setZero(nl + nj);
    for (int c = 0; c < nc; ++c)
        dx[nl + w.core[static_cast<std::size_t>(c)]] = dc[c];
    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        if (status_[static_cast<std::size_t>(l)] == LinkState::closed || d.branch) {
            dx[l] = -f[l];
            continue;
        }
        double r = -f[l];
        if (d.from < nj)
            r -= dx[nl + d.from];
        if (d.to < nj)
            r += dx[nl + d.to];
        dx[l] = r / deriv_[l];
    }
    return dx.allFinite();
}

// Newton step on the full flow/head system.
void HydraulicSolver::full_step(const Eigen::VectorXd& f, Eigen::VectorXd& dx)
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    const auto& pruned = work_->pruned;
    auto in_balance = [&](int v) {
        return v < nj && !isolated_[static_cast<std::size_t>(v)] && !pruned[static_cast<std::size_t>(v)];
    };
    std::vector<Eigen::Triplet<double>> t;
    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        const LinkState st = status_[static_cast<std::size_t>(l)];
        if (d.branch) {
            t.emplace_back(l, l, 1.0);
        } else if (st == LinkState::active) {
            if (d.to < nj)
                t.emplace_back(l, nl + d.to, 1.0);
        } else {
            t.emplace_back(l, l, deriv_[l]);
            if (st != LinkState::closed) {
                if (d.from < nj)
                    t.emplace_back(l, nl + d.from, 1.0);
                if (d.to < nj)
                    t.emplace_back(l, nl + d.to, -1.0);
            }
        }
        if (in_balance(d.to))
            t.emplace_back(nl + d.to, l, 1.0);
        if (in_balance(d.from))
            t.emplace_back(nl + d.from, l, -1.0);
    }
    for (int j = 0; j < nj; ++j)
        if (!in_balance(j))
            t.emplace_back(nl + j, nl + j, 1.0);
    Eigen::SparseMatrix<double> jac(nl + nj, nl + nj);
    jac.setFromTriplets(t.begin(), t.end());
    if (nl + nj <= kDenseLimit) {
        dx = Eigen::PartialPivLU<Eigen::MatrixXd>(Eigen::MatrixXd(jac)).solve(-f);
    } else {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(jac);
        if (lu.info() != Eigen::Success)
            throw SolveError("singular hydraulic Jacobian");
        dx = lu.solve(-f);
    }
    if (!dx.allFinite())
        throw SolveError("singular hydraulic Jacobian");
}

void HydraulicSolver::newton(const SolveInput& in)
{
    const int n = static_cast<int>(x_.size());
    if (n == 0)
        return;
    Eigen::VectorXd f(n), f_trial(n), x_trial(n), dx(n);

    for (int it = 0; it < options_.max_iterations; ++it) {
        assemble(in, x_, f, true);
        const double norm = residual_norm(f);
        if (norm <= 1.0)
            return;
        if (!reduced_step(f, dx))
            full_step(f, dx);

        // Backtracking line search on the scaled max-residual.
        double lambda = 1.0;
        for (int ls = 0; ls < 10; ++ls) {
            x_trial = x_ + lambda * dx;
            assemble(in, x_trial, f_trial, false);
            if (residual_norm(f_trial) < norm || ls == 9)
                break;
            lambda *= 0.5;
        }
        x_ = x_trial;
    }
    assemble(in, x_, f, false);
    const int nl = index_.link_count();
    Eigen::Index worst = 0;
    f.cwiseAbs().maxCoeff(&worst);
    std::ostringstream msg;
    msg << "hydraulic solve did not converge in " << options_.max_iterations << " iterations (worst residual "
        << std::abs(f[worst]) << " at "
        << (worst < nl ? "link " + index_.link_id(static_cast<int>(worst))
                       : "junction " + index_.node_id(static_cast<int>(worst) - nl))
        << ")";
    throw SolveError(msg.str());
}

void HydraulicSolver::mark_isolated(const SolveInput& in)
{
    const int nn = index_.node_count();
    const int nj = index_.junction_count();
    const int nl = index_.link_count();
    auto& seen = work_->seen;
    auto& stack = work_->stack;
    const auto& start = work_->inc_start;
    seen.assign(static_cast<std::size_t>(nn), 0);
    stack.clear();
    for (int v = nj; v < nn; ++v) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
    }
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int k = start[static_cast<std::size_t>(v)]; k < start[static_cast<std::size_t>(v) + 1]; ++k) {
            const int l = work_->inc_link[static_cast<std::size_t>(k)];
            if (status_[static_cast<std::size_t>(l)] == LinkState::closed)
                continue;
            const LinkData& d = links_[static_cast<std::size_t>(l)];
            const int w = d.from == v ? d.to : d.from;
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
        }
    }
    for (int j = 0; j < nj; ++j) {
        const bool iso = !seen[static_cast<std::size_t>(j)];
        if (iso && in.junction_demands[j] > 0.0) {
            std::string msg = "demanded junction " + index_.node_id(j) + " is cut off from every source";
            std::string limited;
            for (int t = 0; t < index_.tank_count(); ++t) {
                const int lim = in.tank_limits.empty() ? 0 : in.tank_limits[static_cast<std::size_t>(t)];
                if (lim & kNoOutflow)
                    limited += (limited.empty() ? "" : ", ") + net_.tanks[static_cast<std::size_t>(t)].id + " empty";
                else if (lim & kNoInflow)
                    limited += (limited.empty() ? "" : ", ") + net_.tanks[static_cast<std::size_t>(t)].id + " full";
            }
            if (!limited.empty())
                msg += " (tanks at bound: " + limited + ")";
            throw SolveError(msg);
        }
        if (iso && !isolated_[static_cast<std::size_t>(j)])
            x_[nl + j] = index_.node_elevation(j);
        isolated_[static_cast<std::size_t>(j)] = iso ? 1 : 0;
    }
}

bool HydraulicSolver::update_status(const SolveInput& in)
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    const int nr = index_.reservoir_count();
    const HeadView head{index_, x_, in};
    bool changed = false;
    auto close = [&](int l, Closure why) {
        status_[static_cast<std::size_t>(l)] = LinkState::closed;
        closed_by_[static_cast<std::size_t>(l)] = why;
        changed = true;
    };
    auto set = [&](int l, LinkState s) {
        status_[static_cast<std::size_t>(l)] = s;
        closed_by_[static_cast<std::size_t>(l)] = kNotClosed;
        changed = true;
    };
    auto tank_of = [&](int node) { return node >= nj + nr ? node - nj - nr : -1; };
    auto limit = [&](int t) { return in.tank_limits.empty() ? 0 : in.tank_limits[static_cast<std::size_t>(t)]; };

    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        const LinkState s = status_[static_cast<std::size_t>(l)];
        const Closure why = static_cast<Closure>(closed_by_[static_cast<std::size_t>(l)]);
        const double q = x_[l];
        const double ha = head(d.from);
        const double hb = head(d.to);
        if (why == kInitial || why == kSchedule)
            continue;

        // Tank bounds take precedence over element rules.
        const int ta = tank_of(d.from);
        const int tb = tank_of(d.to);
        if (s != LinkState::closed) {
            if ((tb >= 0 && (limit(tb) & kNoInflow) && q > kFlowTiny) ||
                (ta >= 0 && (limit(ta) & kNoInflow) && q < -kFlowTiny)) {
                close(l, kTankFull);
                continue;
            }
            if ((ta >= 0 && (limit(ta) & kNoOutflow) && q > kFlowTiny) ||
                (tb >= 0 && (limit(tb) & kNoOutflow) && q < -kFlowTiny)) {
                close(l, kTankEmpty);
                continue;
            }
        } else if (why == kTankFull) {
            // Reopen only if the tank would now drain through this link.
            const bool drains = d.kind == LinkKind::pipe && !d.check_valve &&
                                ((tb >= 0 && ha < hb - kHeadTiny) || (ta >= 0 && hb < ha - kHeadTiny));
            const bool pump_out = d.kind == LinkKind::pump && ta >= 0 && !(limit(ta) & kNoOutflow);
            if (drains || pump_out)
                set(l, LinkState::open);
            continue;
        } else if (why == kTankEmpty) {
            const bool fills = d.kind == LinkKind::pipe && !d.check_valve &&
                               ((tb >= 0 && ha > hb + kHeadTiny) || (ta >= 0 && hb > ha + kHeadTiny));
            const bool pump_in = d.kind == LinkKind::pump && tb >= 0 && !(limit(tb) & kNoInflow);
            if (fills || pump_in)
                set(l, d.kind == LinkKind::valve ? LinkState::active : LinkState::open);
            continue;
        }

        switch (d.kind) {
        case LinkKind::pipe:
            if (!d.check_valve)
                break;
            if (s == LinkState::open && q < -kFlowTiny)
                close(l, kCheckValve);
            else if (s == LinkState::closed && ha - hb > kHeadTiny)
                set(l, LinkState::open);
            break;
        case LinkKind::pump:
            if (s == LinkState::open && q < -kFlowTiny)
                close(l, kReverseFlow);
            else if (s == LinkState::closed && hb - ha < d.pump->hq_curve.shutoff_head() - kHeadTiny)
                set(l, LinkState::open);
            break;
        case LinkKind::valve:
            if (s == LinkState::active) {
                if (q < -kFlowTiny)
                    close(l, kValve);
                else if (ha < d.prv_head - kHeadTiny)
                    set(l, LinkState::open);
            } else if (s == LinkState::open) {
                if (q < -kFlowTiny)
                    close(l, kValve);
                else if (hb > d.prv_head + kHeadTiny)
                    set(l, LinkState::active);
            } else {
                if (ha > d.prv_head + kHeadTiny)
                    set(l, LinkState::active);
                else if (ha > hb + kHeadTiny)
                    set(l, LinkState::open);
            }
            break;
        }
    }
    return changed;
}

HydraulicState HydraulicSolver::solve(const SolveInput& in)
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    if (in.junction_demands.size() != nj || static_cast<int>(in.pump_on.size()) != index_.pump_count() ||
        in.reservoir_heads.size() != index_.reservoir_count() || in.tank_heads.size() != index_.tank_count())
        throw std::invalid_argument("solve input does not match the network dimensions");
    if (!in.reservoir_heads.allFinite() || !in.tank_heads.allFinite())
        throw std::invalid_argument("boundary heads must be finite");

    // Schedule-driven pump status and re-evaluation of tank closures.
    for (int p = 0; p < index_.pump_count(); ++p) {
        const auto l = static_cast<std::size_t>(index_.pump_link(p));
        if (!in.pump_on[static_cast<std::size_t>(p)]) {
            status_[l] = LinkState::closed;
            closed_by_[l] = kSchedule;
        } else if (closed_by_[l] == kSchedule) {
            status_[l] = LinkState::open;
            closed_by_[l] = kNotClosed;
            if (x_[static_cast<Eigen::Index>(l)] <= 0.0)
                x_[static_cast<Eigen::Index>(l)] = links_[l].pump->bep ? links_[l].pump->bep->x() : 10.0;
        }
    }
    for (int l = 0; l < nl; ++l) {
        auto& why = closed_by_[static_cast<std::size_t>(l)];
        if (why == kTankFull || why == kTankEmpty) {
            status_[static_cast<std::size_t>(l)] =
                links_[static_cast<std::size_t>(l)].kind == LinkKind::valve ? LinkState::active : LinkState::open;
            why = kNotClosed;
        }
    }

    set_branch_flows(in);
    for (int check = 0; check < options_.max_status_checks; ++check) {
        mark_isolated(in);
        newton(in);
        if (!update_status(in))
            break;
    }
    recover_branch_heads(in);
    warm_ = true;
    return make_state(in);
}

HydraulicState HydraulicSolver::make_state(const SolveInput& in) const
{
    const int nl = index_.link_count();
    const int nj = index_.junction_count();
    const int nn = index_.node_count();
    const HeadView head{index_, x_, in};
    HydraulicState st;
    st.link_flows = x_.head(nl);
    st.node_heads.resize(nn);
    for (int v = 0; v < nn; ++v)
        st.node_heads[v] = head(v);
    st.link_energy_head.setZero(nl);
    st.link_headloss.resize(nl);
    st.link_states = status_;
    st.junction_demands = in.junction_demands;
    st.pumps.resize(static_cast<std::size_t>(index_.pump_count()));
    st.tank_net_inflow.setZero(index_.tank_count());
    st.reservoir_outflow.setZero(index_.reservoir_count());
    st.tank_levels.resize(index_.tank_count());
    for (int t = 0; t < index_.tank_count(); ++t)
        st.tank_levels[t] = in.tank_heads[t] - net_.tanks[static_cast<std::size_t>(t)].elevation;

    for (int l = 0; l < nl; ++l) {
        const LinkData& d = links_[static_cast<std::size_t>(l)];
        const bool closed = status_[static_cast<std::size_t>(l)] == LinkState::closed;
        if (closed)
            st.link_flows[l] = 0.0;
        const double q = st.link_flows[l];
        const double dh = st.node_heads[d.from] - st.node_heads[d.to];
        st.link_headloss[l] = dh;
        if (d.kind == LinkKind::pump) {
            auto& pp = st.pumps[static_cast<std::size_t>(index_.local_link_index(l))];
            pp.running = !closed && q > 0.0;
            pp.flow = pp.running ? q : 0.0;
            pp.head_gain = pp.running ? std::max(-dh, 0.0) : 0.0;
            pp.efficiency = d.pump->efficiency(pp.flow);
            pp.power_kw = pp.running ? pump_power(pp.flow, pp.head_gain, pp.efficiency) : 0.0;
            st.link_energy_head[l] = pp.running ? pp.head_gain / pp.efficiency : 0.0;
        } else if (!closed) {
            st.link_energy_head[l] = std::abs(dh);
        }
        const int tf = d.from - nj - index_.reservoir_count();
        const int tt = d.to - nj - index_.reservoir_count();
        if (tt >= 0)
            st.tank_net_inflow[tt] += q;
        if (tf >= 0)
            st.tank_net_inflow[tf] -= q;
        if (d.from >= nj && tf < 0)
            st.reservoir_outflow[d.from - nj] += q;
        if (d.to >= nj && tt < 0)
            st.reservoir_outflow[d.to - nj] -= q;
    }
    st.min_consumer_pressure = std::numeric_limits<double>::infinity();
    for (int j = 0; j < nj; ++j)
        if (in.junction_demands[j] > 0.0)
            st.min_consumer_pressure = std::min(st.min_consumer_pressure, st.node_heads[j] - index_.node_elevation(j));
    return st;
}

Eigen::VectorXd implicit_tank_levels(const Eigen::VectorXd& levels, double dt, const Eigen::VectorXd& areas,
                                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& net_inflow,
                                     double tolerance, int max_iterations)
{
    Eigen::VectorXd x = levels;
    Eigen::VectorXd x_prev, g_prev;
    double worst = 0.0;
    for (int k = 0; k < max_iterations; ++k) {
        const Eigen::VectorXd q = net_inflow(x);
        const Eigen::VectorXd next = levels + dt * q.cwiseQuotient(areas);
        const Eigen::VectorXd g = next - x;
        worst = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
        if (worst <= tolerance)
            return next;
        Eigen::VectorXd step = g;
        if (k > 0) {
            // Diagonal secant on G(x) = L0 + dt Q(x)/A - x, whose slope is <= -1
            // for a physical tank (more head, less inflow).
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double dx = x[i] - x_prev[i];
                double slope = std::abs(dx) > 1e-14 ? (g[i] - g_prev[i]) / dx : -1.0;
                if (!std::isfinite(slope) || slope > -1.0)
                    slope = -1.0;
                step[i] = -g[i] / slope;
            }
        }
        x_prev = x;
        g_prev = g;
        x += step;
    }
    std::ostringstream msg;
    msg << "tank level iteration did not converge (change " << worst << " m after " << max_iterations
        << " iterations)";
    throw SolveError(msg.str());
}

std::pair<HydraulicState, Eigen::VectorXd> HydraulicSolver::implicit_step(const Eigen::VectorXd& levels, double dt,
                                                                          SolveInput& in)
{
    HydraulicState last;
    auto eval = [&](const Eigen::VectorXd& lv) {
        for (int t = 0; t < index_.tank_count(); ++t)
            in.tank_heads[t] = net_.tanks[static_cast<std::size_t>(t)].elevation + lv[t];
        last = solve(in);
        return Eigen::VectorXd(last.tank_net_inflow);
    };
    Eigen::VectorXd next = implicit_tank_levels(levels, dt, tank_area_, eval, options_.tank_tolerance,
                                                options_.max_tank_iterations);
    return {std::move(last), std::move(next)};
}

namespace {

struct StepAccumulator {
    double time = 0.0;
    Eigen::VectorXd flow_dt, head_dt, loss_dt, energy_dt, absq_dt, tank_dt, res_dt;
    Eigen::VectorXd pump_flow_dt, pump_gain_dt, pump_energy;
    double min_pressure = std::numeric_limits<double>::infinity();
    std::vector<char> pump_running;

    void add(const HydraulicState& s, double tau)
    {
        if (time == 0.0 && flow_dt.size() == 0) {
            flow_dt.setZero(s.link_flows.size());
            head_dt.setZero(s.node_heads.size());
            loss_dt.setZero(s.link_flows.size());
            energy_dt.setZero(s.link_flows.size());
            absq_dt.setZero(s.link_flows.size());
            tank_dt.setZero(s.tank_net_inflow.size());
            res_dt.setZero(s.reservoir_outflow.size());
            pump_flow_dt.setZero(static_cast<Eigen::Index>(s.pumps.size()));
            pump_gain_dt.setZero(static_cast<Eigen::Index>(s.pumps.size()));
            pump_energy.setZero(static_cast<Eigen::Index>(s.pumps.size()));
            pump_running.assign(s.pumps.size(), 0);
        }
        time += tau;
        flow_dt += tau * s.link_flows;
        head_dt += tau * s.node_heads;
        loss_dt += tau * s.link_headloss;
        const Eigen::VectorXd absq = s.link_flows.cwiseAbs();
        energy_dt += tau * absq.cwiseProduct(s.link_energy_head);
        absq_dt += tau * absq;
        tank_dt += tau * s.tank_net_inflow;
        res_dt += tau * s.reservoir_outflow;
        for (std::size_t p = 0; p < s.pumps.size(); ++p) {
            const auto& pp = s.pumps[p];
            pump_flow_dt[static_cast<Eigen::Index>(p)] += tau * pp.flow;
            pump_gain_dt[static_cast<Eigen::Index>(p)] += tau * pp.flow * pp.head_gain;
            pump_energy[static_cast<Eigen::Index>(p)] += tau * pp.power_kw;
            pump_running[p] = static_cast<char>(pump_running[p] || pp.running);
        }
        min_pressure = std::min(min_pressure, s.min_consumer_pressure);
    }
};

}  // namespace

HydraulicState HydraulicSolver::step_tanks(Eigen::VectorXd& levels, double dt, SolveInput in)
{
    const int nt = index_.tank_count();
    const double tol = options_.tank_tolerance;
    in.tank_heads.resize(nt);
    in.tank_limits.assign(static_cast<std::size_t>(nt), 0);

    StepAccumulator acc;
    HydraulicState last;
    double remaining = dt;
    int substeps = 0;
    while (remaining > 1e-12 * dt) {
        if (++substeps > options_.max_substeps)
            throw SolveError("too many tank bound events within one step");
        for (int t = 0; t < nt; ++t) {
            const Tank& tk = net_.tanks[static_cast<std::size_t>(t)];
            int lim = 0;
            if (levels[t] >= tk.max_level - tol)
                lim |= kNoInflow;
            if (levels[t] <= tk.min_level + tol)
                lim |= kNoOutflow;
            in.tank_limits[static_cast<std::size_t>(t)] = lim;
        }

        // Fraction of `tau` after which the first tank reaches a bound.
        auto crossing = [&](const Eigen::VectorXd& next, int& which, double& bound) {
            double frac = 1.0;
            which = -1;
            for (int t = 0; t < nt; ++t) {
                const Tank& tk = net_.tanks[static_cast<std::size_t>(t)];
                const double change = next[t] - levels[t];
                double b = 0.0;
                if (next[t] > tk.max_level + tol)
                    b = tk.max_level;
                else if (next[t] < tk.min_level - tol)
                    b = tk.min_level;
                else
                    continue;
                const double f = std::clamp((b - levels[t]) / change, 0.0, 1.0);
                if (which < 0 || f < frac) {
                    frac = f;
                    which = t;
                    bound = b;
                }
            }
            return frac;
        };

        auto [state, next] = implicit_step(levels, remaining, in);
        int which = -1;
        double bound = 0.0;
        double frac = crossing(next, which, bound);
        if (which < 0) {
            acc.add(state, remaining);
            levels = next;
            last = std::move(state);
            break;
        }

        // Locate the event time: secant on the crossing tank's level,
        // bracketed between a crossing-free tau_lo and an overshooting tau_hi.
        double tau_lo = 0.0;
        double tau_hi = remaining;
        double tau = remaining * frac;
        std::optional<std::pair<HydraulicState, Eigen::VectorXd>> best;
        double best_tau = 0.0;
        for (int it = 0; it < 12; ++it) {
            if (!(tau > tau_lo && tau < tau_hi))
                tau = 0.5 * (tau_lo + tau_hi);
            auto trial = implicit_step(levels, tau, in);
            int w = -1;
            double b = 0.0;
            const double f = crossing(trial.second, w, b);
            if (w >= 0) {
                tau_hi = tau;
                which = w;
                bound = b;
                tau = tau * f;
                continue;
            }
            tau_lo = tau;
            best_tau = tau;
            const double gap = bound - trial.second[which];
            const double change = trial.second[which] - levels[which];
            best = std::move(trial);
            if (std::abs(gap) <= tol)
                break;
            tau = std::abs(change) > 0.0 ? best_tau * (bound - levels[which]) / change : tau_hi;
        }
        if (!best || best_tau <= 0.0)
            throw SolveError("could not locate tank " + net_.tanks[static_cast<std::size_t>(which)].id +
                             " bound event");
        acc.add(best->first, best_tau);
        levels = best->second;
        last = std::move(best->first);
        remaining -= best_tau;
    }

    // Step average.
    HydraulicState st = std::move(last);
    const double T = acc.time;
    st.dt_hours = dt;
    st.substeps = substeps;
    st.link_flows = acc.flow_dt / T;
    st.node_heads = acc.head_dt / T;
    st.link_headloss = acc.loss_dt / T;
    for (Eigen::Index l = 0; l < st.link_energy_head.size(); ++l)
        st.link_energy_head[l] = acc.absq_dt[l] > 0.0 ? acc.energy_dt[l] / acc.absq_dt[l] : 0.0;
    st.tank_net_inflow = acc.tank_dt / T;
    st.reservoir_outflow = acc.res_dt / T;
    st.tank_levels = levels;
    st.min_consumer_pressure = acc.min_pressure;
    st.pump_energy_kwh = 0.0;
    for (std::size_t p = 0; p < st.pumps.size(); ++p) {
        auto& pp = st.pumps[p];
        const auto i = static_cast<Eigen::Index>(p);
        pp.running = acc.pump_running[p] != 0;
        pp.flow = acc.pump_flow_dt[i] / T;
        pp.head_gain = acc.pump_flow_dt[i] > 0.0 ? acc.pump_gain_dt[i] / acc.pump_flow_dt[i] : 0.0;
        pp.power_kw = acc.pump_energy[i] / T;
        if (substeps > 1 && pp.power_kw > 0.0)
            pp.efficiency = kWaterDensity * kGravity * (pp.flow / kSecondsPerHour) * pp.head_gain / (pp.power_kw * 1000.0);
        st.pump_energy_kwh += acc.pump_energy[i];
    }
    return st;
}

HydraulicState solve_timestep(const Network& net, const Eigen::VectorXd& junction_demands,
                              const std::vector<bool>& pump_on, const Eigen::VectorXd& boundary_heads,
                              const SolverOptions& options)
{
    HydraulicSolver solver(net, options);
    const auto& idx = solver.index();
    if (boundary_heads.size() != idx.reservoir_count() + idx.tank_count())
        throw std::invalid_argument("boundary heads must list every reservoir and tank");
    SolveInput in;
    in.junction_demands = junction_demands;
    in.pump_on = pump_on;
    in.reservoir_heads = boundary_heads.head(idx.reservoir_count());
    in.tank_heads = boundary_heads.tail(idx.tank_count());
    HydraulicState st = solver.solve(in);
    st.dt_hours = options.dt_hours;
    for (const auto& pp : st.pumps)
        st.pump_energy_kwh += pp.power_kw * options.dt_hours;
    return st;
}

Eigen::VectorXd junction_demands_at(const Network& net, int clock_hour)
{
    Eigen::VectorXd d(static_cast<Eigen::Index>(net.junctions.size()));
    for (std::size_t j = 0; j < net.junctions.size(); ++j)
        d[static_cast<Eigen::Index>(j)] = net.demand(j, clock_hour);
    return d;
}

SimulationResult simulate_eps(const Network& net, const PumpSchedule& schedule, const SolverOptions& options)
{
    const NetworkIndex idx(net);
    if (schedule.pumps() != idx.pump_count())
        throw std::invalid_argument("schedule has " + std::to_string(schedule.pumps()) + " rows but the network has " +
                                    std::to_string(idx.pump_count()) + " pumps");
    if (schedule.hours() != net.horizon_steps)
        throw std::invalid_argument("schedule has " + std::to_string(schedule.hours()) + " columns, expected " +
                                    std::to_string(net.horizon_steps));
    const double dt = options.dt_hours;
    const double steps_real = net.horizon_steps / dt;
    const int steps = static_cast<int>(std::lround(steps_real));
    if (!(dt > 0.0) || std::abs(steps_real - steps) > 1e-9)
        throw std::invalid_argument("time step must divide the horizon");

    HydraulicSolver solver(net, options);
    SimulationResult res;
    const int nt = idx.tank_count();
    Eigen::VectorXd levels(nt);
    for (int t = 0; t < nt; ++t)
        levels[t] = net.tanks[static_cast<std::size_t>(t)].init_level;
    res.initial_tank_levels = levels;
    res.energy_per_step.setZero(steps);
    res.injected_volume.setZero(idx.reservoir_count());
    res.tank_inflow.setZero(nt, steps);
    res.p_low = std::numeric_limits<double>::infinity();

    SolveInput in;
    in.reservoir_heads.resize(idx.reservoir_count());
    for (int r = 0; r < idx.reservoir_count(); ++r)
        in.reservoir_heads[r] = net.reservoirs[static_cast<std::size_t>(r)].head;
    in.pump_on.assign(static_cast<std::size_t>(idx.pump_count()), false);

    for (int s = 0; s < steps; ++s) {
        const int hour_offset = static_cast<int>(std::floor(s * dt + 1e-9));
        const int clock = (net.horizon_start_hour + hour_offset) % 24;
        in.junction_demands = junction_demands_at(net, clock);
        for (int p = 0; p < idx.pump_count(); ++p)
            in.pump_on[static_cast<std::size_t>(p)] = schedule(p, hour_offset);
        HydraulicState st;
        try {
            st = solver.step_tanks(levels, dt, in);
        }
        catch (const SolveError& e) {
            res.feasible = false;
            res.infeasibility_reason = "step " + std::to_string(s) + " (hour " + std::to_string(clock) + "): " + e.what();
            res.energy_per_step.conservativeResize(s);
            res.tank_inflow.conservativeResize(nt, s);
            break;
        }
        st.time_index = s;
        st.clock_hour = clock;
        for (int t = 0; t < nt; ++t) {
            const Tank& tk = net.tanks[static_cast<std::size_t>(t)];
            if (levels[t] < tk.min_level - 1e-6 || levels[t] > tk.max_level + 1e-6) {
                res.feasible = false;
                res.infeasibility_reason = "step " + std::to_string(s) + ": tank " + tk.id + " left its level range";
            }
        }
        res.energy_per_step[s] = st.pump_energy_kwh;
        res.injected_volume += dt * st.reservoir_outflow;
        res.tank_inflow.col(s) = st.tank_net_inflow;
        if (st.min_consumer_pressure < 0.0)
            res.warnings.push_back("step " + std::to_string(s) + ": negative pressure at a consumer");
        res.p_low = std::min(res.p_low, st.min_consumer_pressure);
        res.states.push_back(std::move(st));
        if (!res.feasible)
            break;
    }
    res.final_tank_levels = levels;
    return res;
}

double max_mass_residual(const Network& net, const HydraulicState& state)
{
    const NetworkIndex idx(net);
    const int nj = idx.junction_count();
    Eigen::VectorXd bal = -state.junction_demands;
    for (int l = 0; l < idx.link_count(); ++l) {
        if (idx.link_to(l) < nj)
            bal[idx.link_to(l)] += state.link_flows[l];
        if (idx.link_from(l) < nj)
            bal[idx.link_from(l)] -= state.link_flows[l];
    }
    return nj > 0 ? bal.cwiseAbs().maxCoeff() : 0.0;
}

double max_head_residual(const Network& net, const HydraulicState& state)
{
    HydraulicSolver probe(net);
    const NetworkIndex& idx = probe.index();
    double worst = 0.0;
    for (int l = 0; l < idx.link_count(); ++l) {
        const LinkState s = state.link_states[static_cast<std::size_t>(l)];
        const int a = idx.link_from(l);
        const int b = idx.link_to(l);
        const double q = state.link_flows[l];
        double r = 0.0;
        if (s == LinkState::closed) {
            r = std::abs(q);
        } else if (s == LinkState::active) {
            const auto& v = net.valves[static_cast<std::size_t>(idx.local_link_index(l))];
            r = std::abs(state.node_heads[b] - idx.node_elevation(b) - v.setting);
        } else {
            double h = 0.0;
            const int k = idx.local_link_index(l);
            switch (idx.link_kind(l)) {
            case LinkKind::pipe: {
                const Pipe& p = net.pipes[static_cast<std::size_t>(k)];
                const double rr = hazen_williams_resistance(p.length, p.diameter, p.roughness_coeff);
                const double m = minor_loss_coeff(p.minor_loss, p.diameter);
                const double aq = std::abs(q);
                h = aq < kSmallFlow ? (rr * std::pow(kSmallFlow, kHwExponent - 1.0) + m * kSmallFlow) * q
                                    : (rr * std::pow(aq, kHwExponent - 1.0) + m * aq) * q;
                break;
            }
            case LinkKind::pump:
                h = -net.pumps[static_cast<std::size_t>(k)].hq_curve.gain(q);
                break;
            case LinkKind::valve: {
                const auto& v = net.valves[static_cast<std::size_t>(k)];
                h = minor_loss_coeff(v.minor_loss, v.diameter) * std::abs(q) * q + kOpenValveLinear * q;
                break;
            }
            }
            r = std::abs(state.node_heads[a] - state.node_heads[b] - h);
        }
        worst = std::max(worst, r);
    }
    return worst;
}

void write_state_csv(std::ostream& out, const Network& net, const SimulationResult& result)
{
    const NetworkIndex idx(net);
    out << "time,element_id,kind,flow_m3h,head_m,level_m,eff,power_kW\n";
    out.precision(10);
    for (const auto& st : result.states) {
        const double t = st.time_index * st.dt_hours;
        for (int v = 0; v < idx.node_count(); ++v) {
            const NodeKind k = idx.node_kind(v);
            out << t << ',' << idx.node_id(v) << ','
                << (k == NodeKind::junction ? "junction" : k == NodeKind::reservoir ? "reservoir" : "tank") << ',';
            if (k == NodeKind::junction)
                out << st.junction_demands[v];
            else if (k == NodeKind::reservoir)
                out << st.reservoir_outflow[idx.local_index(v)];
            else
                out << -st.tank_net_inflow[idx.local_index(v)];
            out << ',' << st.node_heads[v] << ',';
            if (k == NodeKind::tank)
                out << st.tank_levels[idx.local_index(v)];
            out << ",,\n";
        }
        for (int l = 0; l < idx.link_count(); ++l) {
            const LinkKind k = idx.link_kind(l);
            out << t << ',' << idx.link_id(l) << ','
                << (k == LinkKind::pipe ? "pipe" : k == LinkKind::pump ? "pump" : "valve") << ','
                << st.link_flows[l] << ',' << st.link_energy_head[l] << ',';
            if (k == LinkKind::pump) {
                const auto& pp = st.pumps[static_cast<std::size_t>(idx.local_link_index(l))];
                out << ',' << pp.efficiency << ',' << pp.power_kw << '\n';
            } else {
                out << ",,\n";
            }
        }
    }
}

}  // namespace mei
