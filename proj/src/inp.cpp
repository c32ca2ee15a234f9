#include "mei/inp.hpp"

#include "mei/units.hpp"
#include "text_util.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mei {

ParseError::ParseError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line)
{
}

namespace {

using detail::format_double;
using detail::split_ws;
using detail::trim;
using detail::upper;

struct Row {
    int line;
    std::vector<std::string> cols;
};

struct UnitSystem {
    double flow = 1.0;       // file flow unit -> m^3/h
    double length = 1.0;     // file length/elevation/head -> m
    double diameter_div = 1000.0;  // SI pipe diameters in mm
    double diameter_mul = 1.0;     // US pipe diameters in inches
    double pressure = 1.0;   // file pressure -> m
    double power = 1.0;      // file power -> kW
    bool si = true;

    double pipe_diameter(double v) const { return si ? v / diameter_div : v * diameter_mul; }
};

UnitSystem units_for(const std::string& flow_units, int line)
{
    UnitSystem u;
    const std::string f = upper(flow_units);
    static const std::map<std::string, double> us = {
        {"CFS", units::kCfs}, {"GPM", units::kGpm}, {"MGD", units::kMgd}, {"IMGD", units::kImgd}, {"AFD", units::kAfd}};
    static const std::map<std::string, double> si = {{"LPS", units::kLps}, {"LPM", units::kLpm}, {"MLD", units::kMld},
                                                     {"CMH", units::kCmh}, {"CMD", units::kCmd}};
    if (auto it = us.find(f); it != us.end()) {
        u.si = false;
        u.flow = it->second;
        u.length = units::kFoot;
        u.diameter_mul = units::kInch;
        u.pressure = units::kPsi;
        u.power = units::kHorsepower;
    } else if (auto it2 = si.find(f); it2 != si.end()) {
        u.flow = it2->second;
    } else {
        throw ParseError(line, "unknown flow units '" + flow_units + "'");
    }
    return u;
}

double number(const Row& r, std::size_t col, const char* what)
{
    const auto v = detail::to_double(r.cols.at(col));
    if (!v || !std::isfinite(*v))
        throw ParseError(r.line, std::string("cannot parse ") + what + " '" + r.cols.at(col) + "'");
    return *v;
}

void require_cols(const Row& r, std::size_t lo, std::size_t hi, const char* section)
{
    if (r.cols.size() < lo || r.cols.size() > hi)
        throw ParseError(r.line, std::string("malformed ") + section + " row: expected " + std::to_string(lo) +
                                     (hi != lo ? "-" + std::to_string(hi) : std::string()) + " columns, got " +
                                     std::to_string(r.cols.size()));
}

// Parses "h", "h:mm" or "h:mm AM/PM" into hours.
double parse_clock(const std::vector<std::string>& cols, std::size_t from, int line)
{
    if (cols.size() <= from)
        throw ParseError(line, "missing time value");
    std::string v = cols[from];
    std::string suffix = cols.size() > from + 1 ? upper(cols[from + 1]) : std::string();
    const std::string vu = upper(v);
    if (vu.size() > 2 && (vu.ends_with("AM") || vu.ends_with("PM"))) {
        suffix = vu.substr(vu.size() - 2);
        v = v.substr(0, v.size() - 2);
    }
    double hours = 0.0;
    const auto parts = detail::split(v, ':');
    for (std::size_t i = 0; i < parts.size() && i < 3; ++i) {
        const auto x = detail::to_double(parts[i]);
        if (!x)
            throw ParseError(line, "cannot parse time '" + cols[from] + "'");
        hours += *x / std::pow(60.0, static_cast<double>(i));
    }
    if (suffix == "PM" && hours < 12.0)
        hours += 12.0;
    if (suffix == "AM" && hours >= 12.0)
        hours -= 12.0;
    return hours;
}

const std::set<std::string> kSupported = {"TITLE",  "JUNCTIONS", "RESERVOIRS", "TANKS",    "PIPES",
                                          "PUMPS",  "VALVES",    "CURVES",     "PATTERNS", "DEMANDS",
                                          "STATUS", "COORDINATES", "OPTIONS",  "TIMES"};

}  // namespace

Network parse_inp(std::string_view text, std::vector<std::string>* warnings)
{
    auto warn = [&](const std::string& w) {
        if (warnings)
            warnings->push_back(w);
    };

    std::map<std::string, std::vector<Row>> sections;
    std::vector<std::string> title_lines;
    std::string current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r')
            raw.remove_suffix(1);
        std::string_view body = raw.substr(0, raw.find(';'));
        body = trim(body);
        if (body.empty())
            continue;
        if (body.front() == '[') {
            const auto close = body.find(']');
            if (close == std::string_view::npos)
                throw ParseError(line_no, "unterminated section header");
            current = upper(trim(body.substr(1, close - 1)));
            if (current == "END")
                break;
            if (!kSupported.contains(current))
                warn("line " + std::to_string(line_no) + ": skipping unsupported section [" + current + "]");
            continue;
        }
        if (current.empty())
            throw ParseError(line_no, "data before the first section header");
        if (current == "TITLE") {
            title_lines.emplace_back(body);
            continue;
        }
        if (!kSupported.contains(current))
            continue;
        Row r{line_no, {}};
        for (auto tok : split_ws(body))
            r.cols.emplace_back(tok);
        sections[current].push_back(std::move(r));
    }

    Network net;
    for (std::size_t i = 0; i < title_lines.size(); ++i)
        net.title += (i ? "\n" : "") + title_lines[i];

    // Options first: they decide the unit system for everything else.
    UnitSystem u = units_for("GPM", 0);
    double demand_multiplier = 1.0;
    std::string default_pattern;
    for (const auto& r : sections["OPTIONS"]) {
        const std::string key = upper(r.cols[0]);
        if (key == "UNITS") {
            require_cols(r, 2, 2, "UNITS option");
            u = units_for(r.cols[1], r.line);
        } else if (key == "HEADLOSS") {
            require_cols(r, 2, 2, "HEADLOSS option");
            if (upper(r.cols[1]) != "H-W")
                throw ParseError(r.line, "unsupported headloss formula '" + r.cols[1] + "' (only H-W)");
        } else if (key == "PATTERN") {
            require_cols(r, 2, 2, "PATTERN option");
            default_pattern = r.cols[1];
        } else if (key == "DEMAND" && r.cols.size() == 3 && upper(r.cols[1]) == "MULTIPLIER") {
            demand_multiplier = number(r, 2, "demand multiplier");
        }
    }

    for (const auto& r : sections["TIMES"]) {
        const std::string key = upper(r.cols[0]);
        if (key == "DURATION") {
            const double h = parse_clock(r.cols, 1, r.line);
            if (h > 0.0)
                net.horizon_steps = static_cast<int>(std::lround(h));
        } else if (key == "START" && r.cols.size() >= 3 && upper(r.cols[1]) == "CLOCKTIME") {
            net.horizon_start_hour = static_cast<int>(std::lround(parse_clock(r.cols, 2, r.line))) % 24;
        } else if (key == "PATTERN" && r.cols.size() >= 3 && upper(r.cols[1]) == "TIMESTEP") {
            if (std::abs(parse_clock(r.cols, 2, r.line) - 1.0) > 1e-9)
                warn("line " + std::to_string(r.line) + ": pattern timestep other than 1 hour is ignored");
        }
    }

    // Patterns and curves.
    std::map<std::string, std::size_t> pattern_pos;
    for (const auto& r : sections["PATTERNS"]) {
        require_cols(r, 2, 10000, "PATTERNS");
        auto [it, inserted] = pattern_pos.emplace(r.cols[0], net.patterns.size());
        if (inserted)
            net.patterns.push_back({r.cols[0], {}});
        auto& p = net.patterns[it->second];
        for (std::size_t c = 1; c < r.cols.size(); ++c)
            p.multipliers.push_back(number(r, c, "pattern multiplier"));
    }
    std::map<std::string, std::size_t> curve_pos;
    for (const auto& r : sections["CURVES"]) {
        require_cols(r, 3, 3, "CURVES");
        auto [it, inserted] = curve_pos.emplace(r.cols[0], net.curves.size());
        if (inserted)
            net.curves.push_back({r.cols[0], {}});
        net.curves[it->second].points.emplace_back(number(r, 1, "curve flow") * u.flow,
                                                   number(r, 2, "curve head") * u.length);
    }
    if (default_pattern.empty() && pattern_pos.contains("1"))
        default_pattern = "1";
    if (!default_pattern.empty() && !pattern_pos.contains(default_pattern))
        throw ParseError(0, "default pattern '" + default_pattern + "' is not defined");
    net.default_pattern_id = default_pattern;

    auto check_pattern = [&](const Row& r, const std::string& id) {
        if (!id.empty() && !pattern_pos.contains(id))
            throw ParseError(r.line, "dangling reference to pattern '" + id + "'");
    };

    // Nodes.
    std::map<std::string, int> node_line;
    auto new_node = [&](const Row& r) {
        if (!node_line.emplace(r.cols[0], r.line).second)
            throw ParseError(r.line, "duplicate node id '" + r.cols[0] + "' (first defined on line " +
                                         std::to_string(node_line[r.cols[0]]) + ")");
    };
    std::map<std::string, std::size_t> junction_pos;
    for (const auto& r : sections["JUNCTIONS"]) {
        require_cols(r, 2, 4, "JUNCTIONS");
        new_node(r);
        Junction j;
        j.id = r.cols[0];
        j.elevation = number(r, 1, "elevation") * u.length;
        if (r.cols.size() > 2)
            j.base_demand = number(r, 2, "demand") * u.flow * demand_multiplier;
        if (r.cols.size() > 3) {
            j.pattern_id = r.cols[3];
            check_pattern(r, j.pattern_id);
        }
        junction_pos[j.id] = net.junctions.size();
        net.junctions.push_back(std::move(j));
    }
    for (const auto& r : sections["RESERVOIRS"]) {
        require_cols(r, 2, 3, "RESERVOIRS");
        new_node(r);
        InjectionPoint ip;
        ip.id = r.cols[0];
        ip.head = number(r, 1, "head") * u.length;
        if (r.cols.size() > 2)
            warn("line " + std::to_string(r.line) + ": reservoir head pattern ignored");
        net.reservoirs.push_back(std::move(ip));
    }
    if (!net.reservoirs.empty())
        for (auto& ip : net.reservoirs)
            ip.target_fraction = 1.0 / static_cast<double>(net.reservoirs.size());
    std::map<std::string, std::size_t> tank_pos;
    for (const auto& r : sections["TANKS"]) {
        require_cols(r, 6, 9, "TANKS");
        new_node(r);
        if (r.cols.size() > 7 && r.cols[7] != "*")
            throw ParseError(r.line, "tank volume curves are not supported");
        Tank t;
        t.id = r.cols[0];
        t.elevation = number(r, 1, "elevation") * u.length;
        t.init_level = number(r, 2, "initial level") * u.length;
        t.min_level = number(r, 3, "minimum level") * u.length;
        t.max_level = number(r, 4, "maximum level") * u.length;
        t.diameter = number(r, 5, "diameter") * u.length;
        tank_pos[t.id] = net.tanks.size();
        net.tanks.push_back(std::move(t));
    }

    // [DEMANDS] replaces the junction demand of any junction it mentions.
    std::map<std::string, std::pair<double, std::string>> demands;
    for (const auto& r : sections["DEMANDS"]) {
        require_cols(r, 2, 4, "DEMANDS");
        if (!junction_pos.contains(r.cols[0]))
            throw ParseError(r.line, "dangling reference to junction '" + r.cols[0] + "'");
        const double d = number(r, 1, "demand") * u.flow * demand_multiplier;
        const std::string pat = r.cols.size() > 2 ? r.cols[2] : std::string();
        check_pattern(r, pat);
        auto [it, inserted] = demands.emplace(r.cols[0], std::make_pair(d, pat));
        if (!inserted) {
            if (it->second.second != pat)
                throw ParseError(r.line, "multiple demand categories with different patterns are not supported");
            it->second.first += d;
        }
    }
    for (const auto& [id, dp] : demands) {
        auto& j = net.junctions[junction_pos[id]];
        j.base_demand = dp.first;
        j.pattern_id = dp.second;
    }

    // Links.
    std::map<std::string, int> link_line;
    auto new_link = [&](const Row& r) {
        if (!link_line.emplace(r.cols[0], r.line).second)
            throw ParseError(r.line, "duplicate link id '" + r.cols[0] + "' (first defined on line " +
                                         std::to_string(link_line[r.cols[0]]) + ")");
        for (std::size_t c : {1u, 2u})
            if (!node_line.contains(r.cols[c]))
                throw ParseError(r.line, "dangling reference to node '" + r.cols[c] + "'");
    };
    std::map<std::string, std::size_t> pipe_pos;
    for (const auto& r : sections["PIPES"]) {
        require_cols(r, 6, 8, "PIPES");
        new_link(r);
        Pipe p;
        p.id = r.cols[0];
        p.from_node = r.cols[1];
        p.to_node = r.cols[2];
        p.length = number(r, 3, "length") * u.length;
        p.diameter = u.pipe_diameter(number(r, 4, "diameter"));
        p.roughness_coeff = number(r, 5, "roughness");
        if (r.cols.size() > 6)
            p.minor_loss = number(r, 6, "minor loss");
        if (r.cols.size() > 7) {
            const std::string s = upper(r.cols[7]);
            if (s == "CV")
                p.has_check_valve = true;
            else if (s == "CLOSED")
                p.initial_status = LinkStatus::closed;
            else if (s != "OPEN")
                throw ParseError(r.line, "unknown pipe status '" + r.cols[7] + "'");
        }
        pipe_pos[p.id] = net.pipes.size();
        net.pipes.push_back(std::move(p));
    }
    for (const auto& r : sections["PUMPS"]) {
        require_cols(r, 5, 11, "PUMPS");
        new_link(r);
        Pump p;
        p.id = r.cols[0];
        p.from_node = r.cols[1];
        p.to_node = r.cols[2];
        bool has_law = false;
        for (std::size_t c = 3; c < r.cols.size(); c += 2) {
            if (c + 1 >= r.cols.size())
                throw ParseError(r.line, "pump keyword '" + r.cols[c] + "' has no value");
            const std::string key = upper(r.cols[c]);
            const std::string& val = r.cols[c + 1];
            if (key == "HEAD") {
                const auto it = curve_pos.find(val);
                if (it == curve_pos.end())
                    throw ParseError(r.line, "dangling reference to curve '" + val + "'");
                const auto& pts = net.curves[it->second].points;
                if (pts.size() == 1) {
                    const auto curves = reconstruct_pump_curves(pts[0].x(), pts[0].y(), kDefaultBepEfficiency);
                    p.hq_curve = curves.head;
                    p.eff_curve = curves.efficiency;
                    p.bep = pts[0];
                } else if (pts.size() == 3 && pts[0].x() == 0.0) {
                    p.hq_curve = HeadCurve::three_point(pts[0].y(), pts[1].x(), pts[1].y(), pts[2].x(), pts[2].y());
                } else {
                    p.hq_curve = HeadCurve::tabulated(pts);
                }
                p.head_curve_id = val;
                has_law = true;
            } else if (key == "POWER") {
                p.hq_curve = HeadCurve::constant_power(number(r, c + 1, "pump power") * u.power);
                has_law = true;
            } else if (key == "SPEED") {
                if (std::abs(number(r, c + 1, "pump speed") - 1.0) > 1e-12)
                    throw ParseError(r.line, "variable-speed pumps are not supported");
            } else if (key == "PATTERN") {
                warn("line " + std::to_string(r.line) + ": pump speed pattern ignored; schedules control pumps");
            } else {
                throw ParseError(r.line, "unknown pump keyword '" + r.cols[c] + "'");
            }
        }
        if (!has_law)
            throw ParseError(r.line, "pump '" + p.id + "' needs a HEAD curve or POWER rating");
        net.pumps.push_back(std::move(p));
    }
    std::set<std::string> valve_ids;
    for (const auto& r : sections["VALVES"]) {
        require_cols(r, 6, 7, "VALVES");
        new_link(r);
        const std::string type = upper(r.cols[4]);
        const double diameter = u.pipe_diameter(number(r, 3, "diameter"));
        const double minor = r.cols.size() > 6 ? number(r, 6, "minor loss") : 0.0;
        if (type == "PRV") {
            PressureReducingValve v;
            v.id = r.cols[0];
            v.from_node = r.cols[1];
            v.to_node = r.cols[2];
            v.diameter = diameter;
            v.setting = number(r, 5, "setting") * u.pressure;
            v.minor_loss = minor;
            valve_ids.insert(v.id);
            net.valves.push_back(std::move(v));
        } else if (type == "CV") {
            // A stand-alone check valve is carried as a 1 m check-valved pipe.
            Pipe p;
            p.id = r.cols[0];
            p.from_node = r.cols[1];
            p.to_node = r.cols[2];
            p.length = 1.0;
            p.diameter = diameter;
            p.roughness_coeff = 140.0;
            p.minor_loss = minor;
            p.has_check_valve = true;
            pipe_pos[p.id] = net.pipes.size();
            net.pipes.push_back(std::move(p));
        } else {
            throw ParseError(r.line, "unsupported valve type '" + r.cols[4] + "' (only PRV and CV)");
        }
    }

    for (const auto& r : sections["STATUS"]) {
        require_cols(r, 2, 2, "STATUS");
        if (!link_line.contains(r.cols[0]))
            throw ParseError(r.line, "dangling reference to link '" + r.cols[0] + "'");
        const std::string s = upper(r.cols[1]);
        if (auto it = pipe_pos.find(r.cols[0]); it != pipe_pos.end()) {
            auto& p = net.pipes[it->second];
            if (s == "CLOSED")
                p.initial_status = LinkStatus::closed;
            else if (s == "OPEN")
                p.initial_status = LinkStatus::open;
            else
                throw ParseError(r.line, "unknown pipe status '" + r.cols[1] + "'");
        } else {
            warn("line " + std::to_string(r.line) + ": initial status of '" + r.cols[0] +
                 "' ignored (pump schedule / valve logic decides)");
        }
    }

    for (const auto& r : sections["COORDINATES"]) {
        require_cols(r, 3, 3, "COORDINATES");
        const Eigen::Vector2d xy(number(r, 1, "x"), number(r, 2, "y"));
        if (auto it = junction_pos.find(r.cols[0]); it != junction_pos.end())
            net.junctions[it->second].coordinates = xy;
        else if (auto t = tank_pos.find(r.cols[0]); t != tank_pos.end())
            net.tanks[t->second].coordinates = xy;
        else {
            bool found = false;
            for (auto& ip : net.reservoirs)
                if (ip.id == r.cols[0]) {
                    ip.coordinates = xy;
                    found = true;
                }
            if (!found)
                throw ParseError(r.line, "dangling reference to node '" + r.cols[0] + "'");
        }
    }
    return net;
}

Network read_inp_file(const std::filesystem::path& path, std::vector<std::string>* warnings)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError(0, "cannot open network file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_inp(ss.str(), warnings);
}

namespace {

// Finds a decimal rendering y of v * scale such that y / scale == v exactly.
std::string format_scaled(double v, double scale)
{
    double y = v * scale;
    for (int i = 0; i < 8; ++i) {
        if (y / scale == v)
            return format_double(y);
        y = std::nextafter(y, (y / scale < v) ? INFINITY : -INFINITY);
    }
    return format_double(v * scale);
}

}  // namespace

std::string emit_inp(const Network& net)
{
    std::ostringstream o;
    const auto f = format_double;
    o << "[TITLE]\n" << net.title << "\n\n";

    o << "[JUNCTIONS]\n";
    for (const auto& j : net.junctions)
        o << j.id << ' ' << f(j.elevation) << ' ' << f(j.base_demand) << (j.pattern_id.empty() ? "" : " ")
          << j.pattern_id << '\n';
    o << "\n[RESERVOIRS]\n";
    for (const auto& r : net.reservoirs)
        o << r.id << ' ' << f(r.head) << '\n';
    o << "\n[TANKS]\n";
    for (const auto& t : net.tanks)
        o << t.id << ' ' << f(t.elevation) << ' ' << f(t.init_level) << ' ' << f(t.min_level) << ' '
          << f(t.max_level) << ' ' << f(t.diameter) << " 0\n";
    o << "\n[PIPES]\n";
    for (const auto& p : net.pipes)
        o << p.id << ' ' << p.from_node << ' ' << p.to_node << ' ' << f(p.length) << ' '
          << format_scaled(p.diameter, 1000.0) << ' ' << f(p.roughness_coeff) << ' ' << f(p.minor_loss) << ' '
          << (p.has_check_valve ? "CV" : p.initial_status == LinkStatus::closed ? "Closed" : "Open") << '\n';
    o << "\n[PUMPS]\n";
    std::vector<Curve> synthetic;
    for (const auto& p : net.pumps) {
        o << p.id << ' ' << p.from_node << ' ' << p.to_node << ' ';
        if (p.hq_curve.kind() == HeadCurve::Kind::constant_power) {
            o << "POWER " << f(p.hq_curve.power_kw()) << '\n';
            continue;
        }
        std::string cid = p.head_curve_id;
        if (cid.empty()) {
            cid = p.id + "_HQ";
            if (p.hq_curve.kind() == HeadCurve::Kind::design_point)
                synthetic.push_back({cid, {Eigen::Vector2d(p.hq_curve.design_flow(), p.hq_curve.design_head())}});
            else if (p.hq_curve.kind() == HeadCurve::Kind::tabulated)
                synthetic.push_back({cid, p.hq_curve.points()});
            else {
                const double a = p.hq_curve.shutoff_head();
                std::vector<Eigen::Vector2d> pts{{0.0, a}};
                for (double q : {1.0, 2.0}) {
                    const double x = q * std::pow(a / (2.0 * p.hq_curve.coeff()), 1.0 / p.hq_curve.exponent());
                    pts.emplace_back(x, p.hq_curve.gain(x));
                }
                synthetic.push_back({cid, pts});
            }
        }
        o << "HEAD " << cid << '\n';
    }
    o << "\n[VALVES]\n";
    for (const auto& v : net.valves)
        o << v.id << ' ' << v.from_node << ' ' << v.to_node << ' ' << format_scaled(v.diameter, 1000.0) << " PRV "
          << f(v.setting) << ' ' << f(v.minor_loss) << '\n';
    o << "\n[CURVES]\n";
    for (const std::vector<Curve>* list : {&net.curves, const_cast<const std::vector<Curve>*>(&synthetic)})
        for (const auto& c : *list)
            for (const auto& pt : c.points)
                o << c.id << ' ' << f(pt.x()) << ' ' << f(pt.y()) << '\n';
    o << "\n[PATTERNS]\n";
    for (const auto& p : net.patterns) {
        o << p.id;
        for (double m : p.multipliers)
            o << ' ' << f(m);
        o << '\n';
    }
    o << "\n[COORDINATES]\n";
    for (const auto& j : net.junctions)
        o << j.id << ' ' << f(j.coordinates.x()) << ' ' << f(j.coordinates.y()) << '\n';
    for (const auto& r : net.reservoirs)
        o << r.id << ' ' << f(r.coordinates.x()) << ' ' << f(r.coordinates.y()) << '\n';
    for (const auto& t : net.tanks)
        o << t.id << ' ' << f(t.coordinates.x()) << ' ' << f(t.coordinates.y()) << '\n';
    o << "\n[OPTIONS]\nUnits CMH\nHeadloss H-W\n";
    if (!net.default_pattern_id.empty())
        o << "Pattern " << net.default_pattern_id << '\n';
    o << "\n[TIMES]\nDuration " << net.horizon_steps << ":00\nPattern Timestep 1:00\nStart ClockTime "
      << net.horizon_start_hour << ":00\n\n[END]\n";
    return o.str();
}

}  // namespace mei
