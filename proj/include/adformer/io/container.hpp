#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adformer/data/demand.hpp"

namespace adformer {

/// `ADF1` flat container: 4 magic bytes, little-endian u32 header length, a
/// UTF-8 JSON header, then a row-major little-endian float64 payload. The
/// payload bytes round-trip bit-exactly.
namespace adf1 {

static_assert(std::endian::native == std::endian::little,
              "ADF1 serialization assumes a little-endian host");

inline void write(const std::string &path, const nlohmann::json &header,
                  const double *payload, std::size_t count) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("adf1: cannot open '" + path + "' for writing");
    const std::string head = header.dump();
    const std::uint32_t len = static_cast<std::uint32_t>(head.size());
    out.write("ADF1", 4);
    out.write(reinterpret_cast<const char *>(&len), 4);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(reinterpret_cast<const char *>(payload),
              static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw std::runtime_error("adf1: write failed for '" + path + "'");
}

struct Document {
    nlohmann::json header;
    std::vector<double> payload;
};

inline Document read(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("adf1: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ADF1", 4) != 0) {
        throw std::runtime_error("adf1: '" + path + "' is not an ADF1 container");
    }
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char *>(&len), 4);
    if (!in) throw std::runtime_error("adf1: truncated header length in '" + path + "'");
    std::string head(len, '\0');
    in.read(head.data(), len);
    if (!in) throw std::runtime_error("adf1: truncated header in '" + path + "'");
    Document doc;
    doc.header = nlohmann::json::parse(head);
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (rest.size() % sizeof(double) != 0) {
        throw std::runtime_error("adf1: payload of '" + path + "' is not a float64 sequence");
    }
    doc.payload.resize(rest.size() / sizeof(double));
    std::memcpy(doc.payload.data(), rest.data(), rest.size());
    return doc;
}

}  // namespace adf1

inline void write_demand_archive(const std::string &path, const DemandTensor &tensor) {
    nlohmann::json header{
        {"schema", "demand"},
        {"shape", {tensor.steps(), tensor.regions(), tensor.channels()}},
        {"bin_width_seconds", tensor.bin_width_sec},
        {"start_timestamp", tensor.timestamps.empty() ? 0 : tensor.timestamps.front()},
        {"region_ids", tensor.region_ids},
    };
    adf1::write(path, header, tensor.values.data(), tensor.values.numel());
}

inline DemandTensor read_demand_archive(const std::string &path) {
    auto doc = adf1::read(path);
    if (doc.header.value("schema", "") != "demand") {
        throw std::runtime_error("adf1: '" + path + "' is not a demand archive");
    }
    const auto shape = doc.header.at("shape");
    const std::size_t t = shape.at(0), n = shape.at(1), d = shape.at(2);
    if (doc.payload.size() != t * n * d) {
        throw std::runtime_error("adf1: demand payload size mismatch in '" + path + "'");
    }
    DemandTensor out;
    out.values = Array::from({t, n, d}, std::move(doc.payload));
    out.bin_width_sec = doc.header.at("bin_width_seconds");
    out.region_ids = doc.header.at("region_ids").get<std::vector<std::string>>();
    if (out.region_ids.size() != n) {
        throw std::runtime_error("adf1: region count mismatch in '" + path + "'");
    }
    const std::int64_t start = doc.header.at("start_timestamp");
    out.timestamps.resize(t);
    for (std::size_t i = 0; i < t; ++i) {
        out.timestamps[i] = start + static_cast<std::int64_t>(i) * out.bin_width_sec;
    }
    return out;
}

}  // namespace adformer
