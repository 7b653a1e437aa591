#include "gsgen/workbench/cloud_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace gsgen {

namespace {

constexpr const char* kMagic = "gsgen-cloud";
constexpr const char* kFields =
    "center.x center.y center.z log_scale.x log_scale.y log_scale.z rotation.w rotation.x rotation.y rotation.z "
    "opacity_logit color.r color.g color.b";
constexpr std::size_t kRecordBytes = 14 * sizeof(float);

void put_f32(Bytes& out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f32(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

} // namespace

Bytes encode_cloud(const GaussianCloud& cloud) {
    std::ostringstream header;
    header << kMagic << ' ' << kCloudFormatVersion << "\nfields " << kFields << "\ncount " << cloud.size()
           << "\nend_header\n";
    const std::string h = header.str();
    Bytes out(h.begin(), h.end());
    out.reserve(h.size() + cloud.size() * kRecordBytes);
    for (const auto& p : cloud.primitives) {
        for (int k = 0; k < 3; ++k) put_f32(out, p.center[k]);
        for (int k = 0; k < 3; ++k) put_f32(out, p.log_scale[k]);
        for (int k = 0; k < 4; ++k) put_f32(out, p.rotation[k]);
        put_f32(out, p.opacity_logit);
        for (int k = 0; k < 3; ++k) put_f32(out, p.color[k]);
    }
    return out;
}

GaussianCloud decode_cloud(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    const auto line = [&](const char* what) {
        const auto* begin = bytes.data() + pos;
        const auto* end = static_cast<const std::uint8_t*>(std::memchr(begin, '\n', bytes.size() - pos));
        if (!end) throw CloudFormatError("truncated cloud header: missing " + std::string(what) + " line at byte offset " + std::to_string(pos));
        std::string s(begin, end);
        pos += s.size() + 1;
        return s;
    };

    std::istringstream magic(line("magic"));
    std::string word;
    int version = 0;
    if (!(magic >> word >> version) || word != kMagic) throw CloudFormatError("not a gsgen cloud file");
    if (version != kCloudFormatVersion) {
        throw CloudFormatError("unsupported cloud version " + std::to_string(version) + " (this build reads version " +
                               std::to_string(kCloudFormatVersion) + ")");
    }
    if (line("fields") != std::string("fields ") + kFields) throw CloudFormatError("unexpected cloud field layout");
    std::istringstream count_line(line("count"));
    long long count = -1;
    if (!(count_line >> word >> count) || word != "count" || count < 0) throw CloudFormatError("bad cloud count line");
    if (line("end_header") != "end_header") throw CloudFormatError("missing end_header");

    const std::size_t n = static_cast<std::size_t>(count);
    if (bytes.size() - pos < n * kRecordBytes) {
        const std::size_t record = (bytes.size() - pos) / kRecordBytes;
        throw CloudFormatError("truncated cloud file: record " + std::to_string(record) + " of " + std::to_string(n) +
                               " ends past byte offset " + std::to_string(bytes.size()) + " (expected " +
                               std::to_string(pos + n * kRecordBytes) + " bytes)");
    }
    if (bytes.size() - pos > n * kRecordBytes) {
        throw CloudFormatError("trailing data after byte offset " + std::to_string(pos + n * kRecordBytes));
    }

    GaussianCloud cloud;
    cloud.primitives.resize(n);
    const std::uint8_t* p = bytes.data() + pos;
    for (auto& g : cloud.primitives) {
        for (int k = 0; k < 3; ++k, p += 4) g.center[k] = get_f32(p);
        for (int k = 0; k < 3; ++k, p += 4) g.log_scale[k] = get_f32(p);
        for (int k = 0; k < 4; ++k, p += 4) g.rotation[k] = get_f32(p);
        g.opacity_logit = get_f32(p);
        p += 4;
        for (int k = 0; k < 3; ++k, p += 4) g.color[k] = get_f32(p);
    }
    return cloud;
}

void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud) {
    write_file_bytes(path, encode_cloud(cloud));
}

GaussianCloud load_cloud(const std::filesystem::path& path) {
    const Bytes bytes = read_file_bytes(path);
    try {
        return decode_cloud(bytes);
    } catch (const CloudFormatError& e) {
        throw CloudFormatError(path.string() + ": " + e.what());
    }
}

} // namespace gsgen
