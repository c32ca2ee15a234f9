#include "mei/schedule.hpp"

#include "text_util.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mei {

int PumpSchedule::hamming(const PumpSchedule& other) const
{
    if (pumps() != other.pumps() || hours() != other.hours())
        throw std::invalid_argument("schedule dimensions differ");
    return static_cast<int>((bits_ != other.bits_).count());
}

PumpSchedule parse_schedule(std::string_view text, int expected_pumps, int expected_hours)
{
    std::vector<std::string> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        for (char c : t)
            if (c != '0' && c != '1')
                throw std::invalid_argument("schedule line " + std::to_string(line_no) + ": expected only 0/1");
        rows.emplace_back(t);
    }
    if (expected_pumps >= 0 && static_cast<int>(rows.size()) != expected_pumps)
        throw std::invalid_argument("schedule has " + std::to_string(rows.size()) + " rows but the network has " +
                                    std::to_string(expected_pumps) + " pumps");
    int hours = rows.empty() ? (expected_hours >= 0 ? expected_hours : kScheduleHours)
                             : static_cast<int>(rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        int n = static_cast<int>(rows[r].size());
        if (n != hours || (expected_hours >= 0 && n != expected_hours))
            throw std::invalid_argument("schedule row " + std::to_string(r + 1) + " has " + std::to_string(n) +
                                        " columns, expected " +
                                        std::to_string(expected_hours >= 0 ? expected_hours : hours));
    }
    PumpSchedule s(static_cast<int>(rows.size()), hours);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int h = 0; h < hours; ++h) s(static_cast<int>(r), h) = rows[r][h] == '1';
    return s;
}

PumpSchedule read_schedule_file(const std::filesystem::path& path, int expected_pumps, int expected_hours)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open schedule " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_schedule(ss.str(), expected_pumps, expected_hours);
}

std::string format_schedule(const PumpSchedule& schedule)
{
    std::string out;
    for (int p = 0; p < schedule.pumps(); ++p) {
        for (int h = 0; h < schedule.hours(); ++h) out += schedule(p, h) ? '1' : '0';
        out += '\n';
    }
    return out;
}

}  // namespace mei
