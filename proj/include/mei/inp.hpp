#pragma once

#include "mei/network.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mei {

/// Error raised while reading a text input; carries the 1-based line number
/// (0 when the problem is not tied to one line).
class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& message);
    int line() const { return line_; }

private:
    int line_;
};

/// Reads the supported EPANET INP subset: [TITLE] [JUNCTIONS] [RESERVOIRS]
/// [TANKS] [PIPES] [PUMPS] [VALVES] [CURVES] [PATTERNS] [DEMANDS] [STATUS]
/// [COORDINATES] [OPTIONS] [TIMES]. Values are converted to SI (m, m^3/h,
/// kW). Other sections are skipped and reported through `warnings`.
///
/// Structural problems (row arity, duplicate ids, dangling references,
/// unsupported valve types, bad numbers) throw ParseError. Element invariants
/// such as tank level ordering are left to validate_network.
Network parse_inp(std::string_view text, std::vector<std::string>* warnings = nullptr);

Network read_inp_file(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Canonical serializer (CMH / metres) used for round-trip checks and for
/// writing transformed networks back out.
std::string emit_inp(const Network& net);

}  // namespace mei
