#include "spmem/trajectory.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace spmem {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw Error(ErrorCode::ParseError, "trajectory line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& tok, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) parse_fail(line, "bad number '" + tok + "'");
    return v;
}

}  // namespace

std::vector<TrajectoryRecord> read_trajectory(std::istream& in, std::size_t expected_dim) {
    std::vector<TrajectoryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::vector<std::string> toks;
        for (std::string t; ss >> t;) toks.push_back(t);
        if (toks.size() < 6) parse_fail(lineno, "expected step, x, y, z, object_id and at least one value");
        TrajectoryRecord r;
        const auto res = std::from_chars(toks[0].data(), toks[0].data() + toks[0].size(), r.step);
        if (res.ec != std::errc() || res.ptr != toks[0].data() + toks[0].size()) parse_fail(lineno, "bad step '" + toks[0] + "'");
        r.position = {parse_double(toks[1], lineno), parse_double(toks[2], lineno), parse_double(toks[3], lineno)};
        r.object_id = toks[4] == "-" ? std::string() : toks[4];
        for (std::size_t i = 5; i < toks.size(); ++i) r.embedding.push_back(parse_double(toks[i], lineno));
        if (expected_dim == 0) expected_dim = r.embedding.size();
        if (r.embedding.size() != expected_dim) {
            throw DimError("trajectory line " + std::to_string(lineno) + " embedding", expected_dim, r.embedding.size());
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TrajectoryRecord> read_trajectory_file(const std::string& path, std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return read_trajectory(in, expected_dim);
}

void write_trajectory(std::ostream& out, const std::vector<TrajectoryRecord>& records) {
    out << "# step x y z object_id v_0 .. v_{d-1}\n";
    const auto old = out.precision(17);
    for (const auto& r : records) {
        out << r.step << ' ' << r.position.x << ' ' << r.position.y << ' ' << r.position.z << ' '
            << (r.object_id.empty() ? "-" : r.object_id);
        for (double v : r.embedding) out << ' ' << v;
        out << '\n';
    }
    out.precision(old);
}

void write_trajectory_file(const std::string& path, const std::vector<TrajectoryRecord>& records) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_trajectory(out, records);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace spmem
