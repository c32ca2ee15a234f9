#pragma once

#include <cmath>
#include <stdexcept>

// Physical constants, unit conversions and the closed-form physics kernels
// shared by the hydraulic engine and the backtracking code. Internal units are
// SI with flows in m^3/h, heads in m, energy in kWh.

namespace mei {

inline constexpr double kWaterDensity = 1000.0;   // kg/m^3
inline constexpr double kGravity = 9.81;          // m/s^2
inline constexpr double kJoulesPerKwh = 3.6e6;
inline constexpr double kSecondsPerHour = 3600.0;

namespace units {

inline constexpr double kFoot = 0.3048;                 // m
inline constexpr double kInch = 0.0254;                 // m
inline constexpr double kUsGallon = 3.785411784e-3;     // m^3
inline constexpr double kImperialGallon = 4.54609e-3;   // m^3
inline constexpr double kCubicFoot = kFoot * kFoot * kFoot;
inline constexpr double kAcreFoot = 1233.48183754752;   // m^3
inline constexpr double kPsi = 0.70307;                 // m of water per psi
inline constexpr double kHorsepower = 0.745699872;      // kW

// Flow unit factors, "file unit -> m^3/h".
inline constexpr double kCfs = kCubicFoot * 3600.0;
inline constexpr double kGpm = kUsGallon * 60.0;
inline constexpr double kMgd = kUsGallon * 1.0e6 / 24.0;
inline constexpr double kImgd = kImperialGallon * 1.0e6 / 24.0;
inline constexpr double kAfd = kAcreFoot / 24.0;
inline constexpr double kLps = 3.6;
inline constexpr double kLpm = 0.06;
inline constexpr double kMld = 1000.0 / 24.0;
inline constexpr double kCmh = 1.0;
inline constexpr double kCmd = 1.0 / 24.0;

}  // namespace units

/// Hazen-Williams head loss in metres for a pipe of length `length` (m),
/// diameter `diameter` (m) and roughness coefficient `c`, carrying `flow`
/// in m^3/s. Flow direction is the caller's business.
template <typename Scalar>
Scalar hazen_williams_headloss(Scalar length, Scalar flow, Scalar diameter, Scalar c)
{
    using std::pow;
    if (!(length > Scalar(0)) || !(diameter > Scalar(0)) || !(c > Scalar(0)) || flow < Scalar(0))
        throw std::invalid_argument("hazen_williams_headloss: requires L, d, C > 0 and Q >= 0");
    return Scalar(10.67) * length * pow(flow, Scalar(1.852)) /
           (pow(c, Scalar(1.852)) * pow(diameter, Scalar(4.87)));
}

/// Hazen-Williams resistance for flows expressed in m^3/h, i.e. the r in
/// h = r * |Q|^1.852.
template <typename Scalar>
Scalar hazen_williams_resistance(Scalar length, Scalar diameter, Scalar c)
{
    using std::pow;
    return Scalar(10.67) * length /
           (pow(c, Scalar(1.852)) * pow(diameter, Scalar(4.87)) * pow(Scalar(kSecondsPerHour), Scalar(1.852)));
}

/// Shaft-to-water power draw in kW of a pump lifting `flow` m^3/h by
/// `head_gain` m at mechanical efficiency `efficiency`.
template <typename Scalar>
Scalar pump_power(Scalar flow, Scalar head_gain, Scalar efficiency)
{
    if (!(efficiency > Scalar(0)) || efficiency > Scalar(1))
        throw std::invalid_argument("pump_power: efficiency must lie in (0, 1]");
    if (flow < Scalar(0) || head_gain < Scalar(0))
        throw std::invalid_argument("pump_power: flow and head gain must be non-negative");
    return Scalar(kWaterDensity * kGravity) * (flow / Scalar(kSecondsPerHour)) * head_gain / efficiency /
           Scalar(1000);
}

/// Energy intensity in kWh/m^3 of lifting water through `head` metres.
template <typename Scalar>
Scalar mei_dist(Scalar head)
{
    return Scalar(kWaterDensity * kGravity) * head / Scalar(kJoulesPerKwh);
}

}  // namespace mei
