#include "mei/pump_curve.hpp"

#include "mei/units.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mei {

HeadCurve HeadCurve::design_point(double flow, double head)
{
    if (!(flow > 0.0) || !(head > 0.0))
        throw std::invalid_argument("design-point pump curve needs positive flow and head");
    HeadCurve c;
    c.kind_ = Kind::design_point;
    c.q_design_ = flow;
    c.h_design_ = head;
    c.shutoff_ = 4.0 * head / 3.0;
    c.exponent_ = 2.0;
    c.coeff_ = head / (3.0 * flow * flow);
    return c;
}

HeadCurve HeadCurve::power_law(double shutoff, double coeff, double exponent)
{
    if (!(shutoff > 0.0) || !(coeff > 0.0) || !(exponent > 1.0 - 1e-12))
        throw std::invalid_argument("power-law pump curve needs a > 0, b > 0, c >= 1");
    HeadCurve c;
    c.kind_ = Kind::power_law;
    c.shutoff_ = shutoff;
    c.coeff_ = coeff;
    c.exponent_ = exponent;
    return c;
}

HeadCurve HeadCurve::three_point(double h0, double q1, double h1, double q2, double h2)
{
    const double d1 = h0 - h1;
    const double d2 = h0 - h2;
    if (!(q1 > 0.0) || !(q2 > q1) || !(d1 > 0.0) || !(d2 > d1))
        throw std::invalid_argument("three-point pump curve must be strictly decreasing from Q = 0");
    const double c = std::log(d2 / d1) / std::log(q2 / q1);
    const double b = d1 / std::pow(q1, c);
    return power_law(h0, b, c);
}

HeadCurve HeadCurve::tabulated(std::vector<Eigen::Vector2d> points)
{
    if (points.size() < 2)
        throw std::invalid_argument("tabulated pump curve needs at least two points");
    HeadCurve c;
    c.kind_ = Kind::tabulated;
    c.points_ = std::move(points);
    c.shutoff_ = c.raw_gain(0.0);
    return c;
}

HeadCurve HeadCurve::constant_power(double power_kw)
{
    if (!(power_kw > 0.0))
        throw std::invalid_argument("constant-power pump needs positive power");
    HeadCurve c;
    c.kind_ = Kind::constant_power;
    c.power_kw_ = power_kw;
    return c;
}

double HeadCurve::raw_gain(double flow) const
{
    switch (kind_) {
    case Kind::design_point: {
        const double q = flow / q_design_;
        return h_design_ * (4.0 - q * q) / 3.0;
    }
    case Kind::power_law:
        return shutoff_ - coeff_ * std::pow(flow, exponent_);
    case Kind::tabulated: {
        const auto& p = points_;
        std::size_t i = 1;
        while (i + 1 < p.size() && flow > p[i].x())
            ++i;
        const double t = (flow - p[i - 1].x()) / (p[i].x() - p[i - 1].x());
        return p[i - 1].y() + t * (p[i].y() - p[i - 1].y());
    }
    case Kind::constant_power:
        return power_kw_ * 1000.0 * kSecondsPerHour / (kWaterDensity * kGravity * flow);
    }
    return 0.0;
}

double HeadCurve::raw_slope(double flow) const
{
    switch (kind_) {
    case Kind::design_point:
        return -2.0 * h_design_ * flow / (3.0 * q_design_ * q_design_);
    case Kind::power_law:
        return -coeff_ * exponent_ * std::pow(flow, exponent_ - 1.0);
    case Kind::tabulated: {
        const auto& p = points_;
        std::size_t i = 1;
        while (i + 1 < p.size() && flow > p[i].x())
            ++i;
        return (p[i].y() - p[i - 1].y()) / (p[i].x() - p[i - 1].x());
    }
    case Kind::constant_power:
        return -raw_gain(flow) / flow;
    }
    return 0.0;
}

double HeadCurve::gain(double flow) const
{
    if (kind_ == Kind::tabulated)
        return raw_gain(flow);
    if (kind_ == Kind::constant_power) {
        // Tangent extension below 1 m^3/h keeps the law finite at zero flow.
        constexpr double q0 = 1.0;
        if (flow >= q0)
            return raw_gain(flow);
        return raw_gain(q0) + raw_slope(q0) * (flow - q0);
    }
    if (flow >= kSmallFlow)
        return raw_gain(flow);
    const double secant = (raw_gain(kSmallFlow) - shutoff_) / kSmallFlow;
    return shutoff_ + secant * flow;
}

double HeadCurve::slope(double flow) const
{
    if (kind_ == Kind::tabulated)
        return raw_slope(flow);
    if (kind_ == Kind::constant_power)
        return raw_slope(std::max(flow, 1.0));
    if (flow >= kSmallFlow)
        return raw_slope(flow);
    return (raw_gain(kSmallFlow) - shutoff_) / kSmallFlow;
}

double HeadCurve::head(double flow) const
{
    return std::max(gain(flow), 0.0);
}

double HeadCurve::shutoff_head() const
{
    if (kind_ == Kind::constant_power)
        return gain(0.0);
    return shutoff_;
}

bool HeadCurve::is_decreasing() const
{
    if (kind_ != Kind::tabulated)
        return true;
    for (std::size_t i = 1; i < points_.size(); ++i)
        if (!(points_[i].x() > points_[i - 1].x()) || !(points_[i].y() < points_[i - 1].y()))
            return false;
    return true;
}

double EfficiencyCurve::operator()(double flow) const
{
    const double q = flow / bep_flow;
    return std::clamp(bep_efficiency * (2.0 * q - q * q), floor, bep_efficiency);
}

PumpCurves reconstruct_pump_curves(double bep_flow, double bep_head, double bep_efficiency)
{
    if (!(bep_flow > 0.0) || !(bep_head > 0.0))
        throw std::invalid_argument("reconstruct_pump_curves: BEP flow and head must be positive");
    if (!(bep_efficiency > 0.0) || bep_efficiency > 1.0)
        throw std::invalid_argument("reconstruct_pump_curves: BEP efficiency must lie in (0, 1]");
    return {HeadCurve::design_point(bep_flow, bep_head),
            EfficiencyCurve{bep_flow, bep_efficiency, std::min(kEfficiencyFloor, bep_efficiency)}};
}

}  // namespace mei
