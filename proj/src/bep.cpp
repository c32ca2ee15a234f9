#include "mei/bep.hpp"

#include "mei/parallel.hpp"

#include <optional>
#include <stdexcept>

namespace mei {

namespace {

constexpr std::uint64_t kBepStream = 0xbe9;

std::optional<Eigen::VectorXd> draw_sample(const Network& net, const NetworkIndex& idx, const BepSampling& sampling,
                                           std::uint64_t seed, int draw, HydraulicSolver& solver)
{
    Rng rng = keyed_rng(seed, kBepStream, static_cast<std::uint64_t>(draw));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SolveInput in;
    in.junction_demands.resize(idx.junction_count());
    for (int j = 0; j < idx.junction_count(); ++j) {
        const double m = sampling.demand_min + (sampling.demand_max - sampling.demand_min) * unit(rng);
        in.junction_demands[j] = net.junctions[static_cast<std::size_t>(j)].base_demand * m;
    }
    in.tank_heads.resize(idx.tank_count());
    for (int t = 0; t < idx.tank_count(); ++t) {
        const Tank& tk = net.tanks[static_cast<std::size_t>(t)];
        in.tank_heads[t] = tk.elevation + tk.min_level + (tk.max_level - tk.min_level) * unit(rng);
    }
    in.tank_limits.assign(static_cast<std::size_t>(idx.tank_count()), 0);
    in.reservoir_heads.resize(idx.reservoir_count());
    for (int r = 0; r < idx.reservoir_count(); ++r)
        in.reservoir_heads[r] = net.reservoirs[static_cast<std::size_t>(r)].head;
    in.pump_on.assign(static_cast<std::size_t>(idx.pump_count()), true);

    HydraulicState st;
    try {
        solver.reset();
        st = solver.solve(in);
    } catch (const SolveError&) {
        return std::nullopt;
    }
    Eigen::VectorXd point(2 * idx.pump_count());
    for (int p = 0; p < idx.pump_count(); ++p) {
        const auto& op = st.pumps[static_cast<std::size_t>(p)];
        if (!op.running || !(op.flow > 0.0))
            return std::nullopt;
        point[2 * p] = op.flow;
        point[2 * p + 1] = op.head_gain;
    }
    return point;
}

}  // namespace

BepEstimate estimate_bep(const Network& net, const BepSampling& sampling, std::uint64_t seed, int threads,
                         const SolverOptions& options)
{
    if (sampling.samples < 1)
        throw std::invalid_argument("BEP sampling needs at least one sample");
    const NetworkIndex idx(net);
    const int n = sampling.samples;
    const int budget = 10 * n;
    threads = std::min(resolve_threads(threads), n);

    // Draws are evaluated in batches but accepted strictly in draw order.
    std::vector<HydraulicSolver> solvers;
    for (int t = 0; t < threads; ++t)
        solvers.emplace_back(net, options);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2 * idx.pump_count());
    int accepted = 0;
    int drawn = 0;
    while (accepted < n && drawn < budget) {
        const int batch = std::min(budget - drawn, n - accepted);
        std::vector<std::optional<Eigen::VectorXd>> results(static_cast<std::size_t>(batch));
        const int workers = std::min(threads, batch);
        parallel_for(workers, workers, [&](int w) {
            for (int i = w; i < batch; i += workers)
                results[static_cast<std::size_t>(i)] =
                    draw_sample(net, idx, sampling, seed, drawn + i, solvers[static_cast<std::size_t>(w)]);
        });
        for (const auto& r : results)
            if (r && accepted < n) {
                sum += *r;
                ++accepted;
            }
        drawn += batch;
    }
    if (accepted < n)
        throw std::runtime_error("BEP estimation found only " + std::to_string(accepted) + " usable samples in " +
                                 std::to_string(budget) + " draws; pumps may be undersized for the demand");
    BepEstimate out;
    for (int p = 0; p < idx.pump_count(); ++p)
        out[net.pumps[static_cast<std::size_t>(p)].id] = Eigen::Vector2d(sum[2 * p] / n, sum[2 * p + 1] / n);
    return out;
}

Network apply_bep(const Network& net, const BepEstimate& bep, double efficiency)
{
    Network out = net;
    for (auto& p : out.pumps) {
        const auto it = bep.find(p.id);
        if (it == bep.end())
            throw std::invalid_argument("no BEP estimate for pump '" + p.id + "'");
        const auto curves = reconstruct_pump_curves(it->second.x(), it->second.y(), efficiency);
        p.hq_curve = curves.head;
        p.eff_curve = curves.efficiency;
        p.bep = it->second;
        p.bep_efficiency = efficiency;
        p.head_curve_id.clear();
    }
    return out;
}

}  // namespace mei
