#include "gsedit/io/rten.hpp"
#include "gsedit/io/files.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>

namespace gsedit::io {

static_assert(std::endian::native == std::endian::little, ".rten payloads are written in host order");

using numerics::DTensor;

std::string encode_rten(const DTensor& t) {
    nlohmann::ordered_json header;
    header["dtype"] = "f32";
    header["shape"] = t.shape();
    header["order"] = "row-major";
    header["endian"] = "little";
    std::string out = header.dump();
    out.push_back('\n');
    const std::size_t offset = out.size();
    out.resize(offset + t.numel() * sizeof(float));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const float v = static_cast<float>(t.values()[i]);
        std::memcpy(out.data() + offset + i * sizeof(float), &v, sizeof(float));
    }
    return out;
}

DTensor decode_rten(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw IoError("rten: missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(fmt::format("rten: bad header: {}", e.what()));
    }
    if (header.value("dtype", "") != "f32" || header.value("order", "") != "row-major" ||
        header.value("endian", "") != "little") {
        throw IoError("rten: only f32 row-major little-endian tensors are supported");
    }
    const auto shape = header.at("shape").get<numerics::Shape>();
    const std::size_t n = numerics::numel(shape);
    if (bytes.size() - nl - 1 != n * sizeof(float)) {
        throw IoError(fmt::format("rten: payload has {} bytes, shape {} needs {}", bytes.size() - nl - 1,
                                  numerics::shape_str(shape), n * sizeof(float)));
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, bytes.data() + nl + 1 + i * sizeof(float), sizeof(float));
        values[i] = v;
    }
    return DTensor::from(shape, std::move(values));
}

void write_rten(const std::filesystem::path& path, const DTensor& t) { write_file_atomic(path, encode_rten(t)); }

DTensor read_rten(const std::filesystem::path& path) { return decode_rten(read_file(path)); }

} // namespace gsedit::io
