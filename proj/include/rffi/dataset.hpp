#pragma once

// On-disk formats: the feature dataset stream and the external IQ container.
//
// Feature dataset: "RFFI1" | u32 header_len | header JSON | records...
//   record = u16 device_label, u8 antenna, u8 kind, u16 length,
//            f32 values[length], f32 cfo_hz, u32 frame_id      (little-endian)
//
// External IQ directory: manifest.json plus one file per frame:
//   "RFFIQ1" | u32 header_len | header JSON | f32 interleaved I/Q

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rffi/features.hpp"
#include "rffi/types.hpp"

namespace rffi {

struct FeatureRecord {
    std::uint16_t device_label = 0;
    std::uint8_t antenna = 0;
    FeatureKind kind = FeatureKind::SR;
    std::vector<float> values;
    float cfo_hz = 0.0f;
    std::uint32_t frame_id = 0;

    bool operator==(const FeatureRecord&) const = default;
};

struct FeatureDataset {
    int num_devices = 0;
    std::vector<std::string> device_ids;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<FeatureRecord> records;

    /// Records of one kind, in file order.
    std::vector<FeatureRecord> of_kind(FeatureKind kind) const;
};

std::string encode_feature_dataset(const FeatureDataset& ds);
FeatureDataset decode_feature_dataset(const std::string& bytes);

void write_feature_dataset(const std::string& path, const FeatureDataset& ds);
FeatureDataset read_feature_dataset(const std::string& path);

struct LabeledFrame {
    ComplexFrame frame;
    std::uint16_t device_label = 0;
    std::uint8_t antenna = 0;
    std::uint32_t frame_id = 0;
};

/// Writes dir/manifest.json and dir/frame_<id>_a<antenna>.iq. Samples are stored as f32.
void export_external(const std::string& dir, const std::vector<LabeledFrame>& frames);

/// Reads a directory written by export_external (or converted to that layout).
std::vector<LabeledFrame> ingest_external(const std::string& dir);

}  // namespace rffi
