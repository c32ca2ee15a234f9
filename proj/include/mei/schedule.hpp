#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace mei {

inline constexpr int kScheduleHours = 24;

using ScheduleBits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary on/off matrix: one row per pump in network order, one column per
/// hourly step of the horizon.
class PumpSchedule {
public:
    PumpSchedule() = default;
    explicit PumpSchedule(int pumps, int hours = kScheduleHours, bool value = false)
        : bits_(ScheduleBits::Constant(pumps, hours, value)) {}
    explicit PumpSchedule(ScheduleBits bits) : bits_(std::move(bits)) {}

    int pumps() const { return static_cast<int>(bits_.rows()); }
    int hours() const { return static_cast<int>(bits_.cols()); }
    bool operator()(int pump, int hour) const { return bits_(pump, hour); }
    bool& operator()(int pump, int hour) { return bits_(pump, hour); }
    const ScheduleBits& bits() const { return bits_; }
    ScheduleBits& bits() { return bits_; }

    /// Number of positions that differ; dimensions must match.
    int hamming(const PumpSchedule& other) const;
    int on_count() const { return static_cast<int>(bits_.count()); }

    bool operator==(const PumpSchedule& other) const {
        return bits_.rows() == other.bits_.rows() && bits_.cols() == other.bits_.cols() &&
               (bits_ == other.bits_).all();
    }

private:
    ScheduleBits bits_;
};

/// One line per pump of '0'/'1' characters. Blank lines and lines starting
/// with '#' are skipped. Throws std::invalid_argument when `expected_pumps`
/// or `expected_hours` (if non-negative) do not match, naming the dimension.
PumpSchedule parse_schedule(std::string_view text, int expected_pumps = -1, int expected_hours = kScheduleHours);
PumpSchedule read_schedule_file(const std::filesystem::path& path, int expected_pumps = -1,
                                int expected_hours = kScheduleHours);
std::string format_schedule(const PumpSchedule& schedule);

}  // namespace mei
