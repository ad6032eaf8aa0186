#include "rffi/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "rffi/byteio.hpp"
#include "rffi/error.hpp"

namespace rffi {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace byteio {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed: " + path);
}

}  // namespace byteio

namespace {

constexpr std::string_view kDatasetMagic = "RFFI1";
constexpr std::string_view kIqMagic = "RFFIQ1";

json parse_header(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what());
    }
}

}  // namespace

std::vector<FeatureRecord> FeatureDataset::of_kind(FeatureKind kind) const {
    std::vector<FeatureRecord> out;
    for (const auto& r : records) {
        if (r.kind == kind) out.push_back(r);
    }
    return out;
}

std::string encode_feature_dataset(const FeatureDataset& ds) {
    std::set<int> kinds;
    for (const auto& r : ds.records) kinds.insert(static_cast<int>(r.kind));
    json kind_names = json::array();
    for (int k : kinds) kind_names.push_back(to_string(static_cast<FeatureKind>(k)));
    const json header{
        {"format", "RFFI1"},       {"version", 1},           {"record_count", ds.records.size()},
        {"num_devices", ds.num_devices}, {"device_ids", ds.device_ids}, {"kinds", kind_names},
        {"provenance", ds.provenance},
    };
    const std::string header_text = header.dump();

    byteio::Writer w;
    w.bytes(kDatasetMagic);
    w.u32(static_cast<std::uint32_t>(header_text.size()));
    w.bytes(header_text);
    for (const auto& r : ds.records) {
        if (r.values.size() > 0xffff) throw InvalidArgument("feature too long for the dataset format");
        w.u16(r.device_label);
        w.u8(r.antenna);
        w.u8(static_cast<std::uint8_t>(r.kind));
        w.u16(static_cast<std::uint16_t>(r.values.size()));
        for (float v : r.values) w.f32(v);
        w.f32(r.cfo_hz);
        w.u32(r.frame_id);
    }
    return w.take();
}

FeatureDataset decode_feature_dataset(const std::string& bytes) {
    byteio::Reader r(bytes);
    if (bytes.size() < kDatasetMagic.size() || r.bytes(kDatasetMagic.size()) != kDatasetMagic) {
        throw FormatError("bad magic: not an RFFI1 dataset");
    }
    const std::uint32_t header_len = r.u32();
    const json header = parse_header(r.bytes(header_len));
    FeatureDataset ds;
    std::size_t count = 0;
    try {
        count = header.at("record_count").get<std::size_t>();
        ds.num_devices = header.at("num_devices").get<int>();
        ds.device_ids = header.value("device_ids", std::vector<std::string>{});
        ds.provenance = header.value("provenance", json::object());
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what());
    }
    ds.records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        rec.device_label = r.u16();
        rec.antenna = r.u8();
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(FeatureKind::SR_UD)) throw FormatError("unknown feature kind code");
        rec.kind = static_cast<FeatureKind>(kind);
        const std::uint16_t len = r.u16();
        rec.values.resize(len);
        for (auto& v : rec.values) v = r.f32();
        rec.cfo_hz = r.f32();
        rec.frame_id = r.u32();
        ds.records.push_back(std::move(rec));
    }
    if (!r.done()) throw FormatError("trailing bytes after the last record");
    return ds;
}

void write_feature_dataset(const std::string& path, const FeatureDataset& ds) {
    byteio::write_file(path, encode_feature_dataset(ds));
}

FeatureDataset read_feature_dataset(const std::string& path) { return decode_feature_dataset(byteio::read_file(path)); }

// ---- external IQ ---------------------------------------------------------------

namespace {

std::string frame_file_name(const LabeledFrame& f) {
    std::ostringstream os;
    os << "frame_" << std::setw(8) << std::setfill('0') << f.frame_id << "_a" << static_cast<int>(f.antenna) << ".iq";
    return os.str();
}

json frame_header(const LabeledFrame& f) {
    return json{{"sample_rate_hz", f.frame.sample_rate_hz},
                {"device_label", f.device_label},
                {"antenna", f.antenna},
                {"frame_id", f.frame_id},
                {"length", f.frame.size()}};
}

}  // namespace

void export_external(const std::string& dir, const std::vector<LabeledFrame>& frames) {
    fs::create_directories(dir);
    json manifest{{"format", "rffi-iq"}, {"version", 1}, {"frame_count", frames.size()}, {"frames", json::array()}};
    double fs_hz = frames.empty() ? kDefaultSampleRateHz : frames.front().frame.sample_rate_hz;
    for (const auto& f : frames) {
        const std::string name = frame_file_name(f);
        json entry = frame_header(f);
        entry["file"] = name;
        manifest["frames"].push_back(entry);

        const std::string header = frame_header(f).dump();
        byteio::Writer w;
        w.bytes(kIqMagic);
        w.u32(static_cast<std::uint32_t>(header.size()));
        w.bytes(header);
        for (const cd& v : f.frame.samples) {
            w.f32(static_cast<float>(v.real()));
            w.f32(static_cast<float>(v.imag()));
        }
        byteio::write_file((fs::path(dir) / name).string(), w.str());
    }
    manifest["sample_rate_hz"] = fs_hz;
    byteio::write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(1) + "\n");
}

std::vector<LabeledFrame> ingest_external(const std::string& dir) {
    const json manifest = parse_header(byteio::read_file((fs::path(dir) / "manifest.json").string()));
    std::vector<LabeledFrame> out;
    try {
        if (manifest.at("format").get<std::string>() != "rffi-iq") throw FormatError("manifest format is not rffi-iq");
        const auto& entries = manifest.at("frames");
        if (entries.size() != manifest.at("frame_count").get<std::size_t>()) {
            throw FormatError("manifest frame_count does not match its frame list");
        }
        for (const json& e : entries) {
            const std::string data = byteio::read_file((fs::path(dir) / e.at("file").get<std::string>()).string());
            byteio::Reader r(data);
            if (data.size() < kIqMagic.size() || r.bytes(kIqMagic.size()) != kIqMagic) {
                throw FormatError("bad magic in " + e.at("file").get<std::string>());
            }
            const json h = parse_header(r.bytes(r.u32()));
            LabeledFrame f;
            f.device_label = h.at("device_label").get<std::uint16_t>();
            f.antenna = h.at("antenna").get<std::uint8_t>();
            f.frame_id = h.at("frame_id").get<std::uint32_t>();
            f.frame.sample_rate_hz = h.at("sample_rate_hz").get<double>();
            const auto len = h.at("length").get<std::size_t>();
            if (f.device_label != e.at("device_label").get<std::uint16_t>() ||
                f.antenna != e.at("antenna").get<std::uint8_t>() || len != e.at("length").get<std::size_t>()) {
                throw FormatError("frame header disagrees with manifest");
            }
            f.frame.samples.resize(len);
            for (auto& v : f.frame.samples) {
                const float re = r.f32();
                const float im = r.f32();
                v = cd(re, im);
            }
            if (!r.done()) throw FormatError("trailing bytes in frame file");
            out.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    return out;
}

}  // namespace rffi
