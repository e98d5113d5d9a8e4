// JSON Lines dataset manifests: one record per rendered sample.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eyedeg/errors.hpp"

namespace eyedeg {

struct SampleRecord {
    std::string path;        // image file, relative to the manifest directory
    std::string domain;      // "syn" | "real" | "blink"
    std::string label_kind;  // "degree" | "binary"
    double label = 0.0;
    int subject = 0;
    std::optional<double> openness_gt;  // exact degree; synthetic renders only
    double gaze_v = 0.0, gaze_h = 0.0;
    double cam_pitch = 0.0, cam_yaw = 0.0;
    std::uint64_t seed = 0;
    std::optional<int> frame_index;  // blink sequences only
};

inline nlohmann::json record_to_json(const SampleRecord& r) {
    nlohmann::json j;
    j["path"] = r.path;
    j["domain"] = r.domain;
    j["label_kind"] = r.label_kind;
    j["label"] = r.label;
    j["subject"] = r.subject;
    if (r.openness_gt) j["openness_gt"] = *r.openness_gt;
    j["gaze"] = {r.gaze_v, r.gaze_h};
    j["camera"] = {r.cam_pitch, r.cam_yaw};
    j["seed"] = r.seed;
    if (r.frame_index) j["frame_index"] = *r.frame_index;
    return j;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord r;
    try {
        r.path = j.at("path").get<std::string>();
        r.domain = j.at("domain").get<std::string>();
        r.label_kind = j.at("label_kind").get<std::string>();
        r.label = j.at("label").get<double>();
        r.subject = j.at("subject").get<int>();
        if (j.contains("openness_gt")) r.openness_gt = j["openness_gt"].get<double>();
        r.gaze_v = j.at("gaze")[0].get<double>();
        r.gaze_h = j.at("gaze")[1].get<double>();
        r.cam_pitch = j.at("camera")[0].get<double>();
        r.cam_yaw = j.at("camera")[1].get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("frame_index")) r.frame_index = j["frame_index"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("manifest: bad record: ") + e.what());
    }
    if (r.label_kind != "degree" && r.label_kind != "binary")
        throw DataError("manifest: unknown label_kind '" + r.label_kind + "'");
    return r;
}

inline void write_manifest(const std::vector<SampleRecord>& records,
                           const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("manifest: cannot open '" + path.string() + "' for writing");
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
    if (!out) throw IoError("manifest: write failed for '" + path.string() + "'");
}

inline std::vector<SampleRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open '" + path.string() + "'");
    std::vector<SampleRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("manifest: invalid JSON line in '" + path.string() + "'");
        records.push_back(record_from_json(j));
    }
    return records;
}

}  // namespace eyedeg
