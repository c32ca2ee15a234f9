#pragma once

#include "mei/hydraulics.hpp"
#include "mei/network.hpp"
#include "mei/scenario.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>

namespace mei {

/// Mean operating point (flow m^3/h, head m) per pump id.
using BepEstimate = std::map<std::string, Eigen::Vector2d>;

/// Samples single-step solves with all pumps on, tank levels uniform over
/// their range and per-junction demand multipliers uniform over
/// [demand_min, demand_max]. A sample counts when it converges and every
/// pump delivers positive flow. Draw k uses its own keyed stream, so the
/// result does not depend on `threads`. Throws std::runtime_error when
/// fewer than `samples` draws out of 10 * samples are usable.
BepEstimate estimate_bep(const Network& net, const BepSampling& sampling, std::uint64_t seed, int threads = 1,
                         const SolverOptions& options = {});

/// Copy of `net` whose pumps carry curves rebuilt from `bep` at `efficiency`.
Network apply_bep(const Network& net, const BepEstimate& bep, double efficiency = kDefaultBepEfficiency);

}  // namespace mei
