#pragma once

#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "adformer/data/timeutil.hpp"

namespace adformer {

struct TripRecord {
    std::int64_t timestamp = 0;  // local epoch seconds
    std::string region_id;
    double count = 1.0;
};

namespace detail {

inline std::string trim(const std::string &s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace detail

/// Reads the `timestamp,region_id[,count]` CSV. Every malformed row fails
/// with its 1-based line number; an input without data rows is an error.
inline std::vector<TripRecord> read_trips_csv(std::istream &in, int utc_offset_minutes) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw std::runtime_error("trips: empty input, no header");
    ++lineno;
    auto header = detail::split_csv_line(line);
    const bool has_count = header.size() == 3 && header[2] == "count";
    if (!(header.size() >= 2 && header[0] == "timestamp" && header[1] == "region_id" &&
          (header.size() == 2 || has_count))) {
        throw std::runtime_error("trips: line 1: expected header 'timestamp,region_id[,count]'");
    }
    std::vector<TripRecord> records;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        const std::size_t expected = header.size();
        if (fields.size() != expected) {
            throw std::runtime_error("trips: line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(expected) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        TripRecord rec;
        try {
            rec.timestamp = timeutil::parse_timestamp(fields[0], utc_offset_minutes);
        } catch (const std::exception &e) {
            throw std::runtime_error("trips: line " + std::to_string(lineno) + ": " + e.what());
        }
        rec.region_id = fields[1];
        if (rec.region_id.empty()) {
            throw std::runtime_error("trips: line " + std::to_string(lineno) + ": empty region_id");
        }
        if (has_count) {
            std::size_t used = 0;
            try {
                rec.count = std::stod(fields[2], &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (used != fields[2].size() || !(rec.count >= 0.0) ||
                !std::isfinite(rec.count)) {
                throw std::runtime_error("trips: line " + std::to_string(lineno) +
                                         ": bad count '" + fields[2] + "'");
            }
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw std::runtime_error("trips: no data rows");
    return records;
}

inline std::vector<TripRecord> read_trips_csv(const std::string &path, int utc_offset_minutes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("trips: cannot open '" + path + "'");
    try {
        return read_trips_csv(in, utc_offset_minutes);
    } catch (const std::exception &e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace adformer
