#pragma once
// Plain-text trajectory files, one observation per line:
//
//   step x y z object_id v_0 v_1 ... v_{d-1}
//
// Fields are whitespace separated. object_id "-" means no object. Blank
// lines and lines starting with '#' are ignored. Every record in a file has
// the same embedding length.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spmem/core.hpp"

namespace spmem {

struct TrajectoryRecord {
    std::uint64_t step = 0;
    Position position;
    std::string object_id;  // empty when the file says "-"
    Embedding embedding;

    bool operator==(const TrajectoryRecord&) const = default;
};

// expected_dim == 0 takes the length of the first record.
// Throws Error(ParseError) with the line number, or DimError on a length mismatch.
std::vector<TrajectoryRecord> read_trajectory(std::istream& in, std::size_t expected_dim = 0);
std::vector<TrajectoryRecord> read_trajectory_file(const std::string& path, std::size_t expected_dim = 0);

// Values are written with 17 significant digits so they parse back exactly.
void write_trajectory(std::ostream& out, const std::vector<TrajectoryRecord>& records);
void write_trajectory_file(const std::string& path, const std::vector<TrajectoryRecord>& records);

}  // namespace spmem
