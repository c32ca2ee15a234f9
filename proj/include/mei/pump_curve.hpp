#pragma once

#include <Eigen/Core>

#include <vector>

namespace mei {

/// Below this flow (m^3/h, equal to 1e-6 m^3/s) head-flow laws are replaced
/// by their secant/tangent line so Newton Jacobians stay nonsingular.
inline constexpr double kSmallFlow = 3.6e-3;

/// Head gain of a fixed-speed pump as a function of flow (m^3/h -> m).
///
/// Four shapes are supported:
///  - design point: h = H_d (4 - q^2) / 3 with q = Q / Q_d. This is the
///    single-point EPANET curve and also the reconstructed curve anchored at
///    a best-efficiency point.
///  - power law: h = a - b Q^c (three-point EPANET fit).
///  - tabulated: piecewise linear through (Q, h) points, linear extrapolation.
///  - constant power: h = P / (rho g Q).
///
/// `gain` is the raw law the solver uses and may go negative past run-out;
/// `head` is the reporting value clamped at zero.
class HeadCurve {
public:
    enum class Kind { design_point, power_law, tabulated, constant_power };

    HeadCurve() = default;

    static HeadCurve design_point(double flow, double head);
    static HeadCurve power_law(double shutoff, double coeff, double exponent);
    /// Fits h = a - b Q^c through (0, h0), (q1, h1), (q2, h2).
    static HeadCurve three_point(double h0, double q1, double h1, double q2, double h2);
    static HeadCurve tabulated(std::vector<Eigen::Vector2d> points);
    static HeadCurve constant_power(double power_kw);

    Kind kind() const { return kind_; }
    double gain(double flow) const;
    double slope(double flow) const;
    double head(double flow) const;
    double shutoff_head() const;
    /// True when the curve is strictly decreasing over its defined range.
    bool is_decreasing() const;

    double design_flow() const { return q_design_; }
    double design_head() const { return h_design_; }
    double power_kw() const { return power_kw_; }
    double coeff() const { return coeff_; }
    double exponent() const { return exponent_; }
    const std::vector<Eigen::Vector2d>& points() const { return points_; }

    bool operator==(const HeadCurve&) const = default;

private:
    double raw_gain(double flow) const;
    double raw_slope(double flow) const;

    Kind kind_ = Kind::design_point;
    double q_design_ = 1.0;
    double h_design_ = 0.0;
    double shutoff_ = 0.0;
    double coeff_ = 0.0;
    double exponent_ = 2.0;
    double power_kw_ = 0.0;
    std::vector<Eigen::Vector2d> points_;
};

/// eta(Q) = eta_bep (2q - q^2), q = Q / Q_bep, clamped to [floor, eta_bep].
struct EfficiencyCurve {
    double bep_flow = 1.0;
    double bep_efficiency = 0.75;
    double floor = 0.10;

    double operator()(double flow) const;
    bool operator==(const EfficiencyCurve&) const = default;
};

struct PumpCurves {
    HeadCurve head;
    EfficiencyCurve efficiency;
};

inline constexpr double kDefaultBepEfficiency = 0.75;
inline constexpr double kEfficiencyFloor = 0.10;

/// Rebuilds both pump curves from a best-efficiency point. Throws
/// std::invalid_argument for non-positive flow/head or efficiency outside (0, 1].
PumpCurves reconstruct_pump_curves(double bep_flow, double bep_head, double bep_efficiency = kDefaultBepEfficiency);

}  // namespace mei
