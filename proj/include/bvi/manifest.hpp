#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "bvi/common.hpp"

namespace bvi {

inline constexpr int kManifestSchemaVersion = 1;

// Sidecar description of a frame directory (latents, blurry, gt or outputs).
struct Manifest {
    int schema_version = kManifestSchemaVersion;
    std::string role;  // latents | blurry | gt | outputs
    double fps = 0.0;
    int frame_count = 0;
    int width = 0;
    int height = 0;
    std::optional<int> degradation_K;
    std::optional<int> degradation_tau;
    uint64_t seed = 0;
    std::string source;
    std::string tool_version = kToolVersion;
    std::string config_hash;

    nlohmann::json to_json() const {
        nlohmann::json j{
            {"schema_version", schema_version},
            {"role", role},
            {"fps", fps},
            {"frame_count", frame_count},
            {"width", width},
            {"height", height},
            {"provenance",
             {{"seed", seed}, {"source", source}, {"tool_version", tool_version}}},
        };
        if (degradation_K || degradation_tau) {
            nlohmann::json d;
            if (degradation_K) d["K"] = *degradation_K;
            if (degradation_tau) d["tau"] = *degradation_tau;
            j["degradation"] = d;
        }
        if (!config_hash.empty()) j["config_hash"] = config_hash;
        return j;
    }

    static Manifest from_json(const nlohmann::json& j) {
        Manifest m;
        try {
            m.schema_version = j.at("schema_version").get<int>();
            m.role = j.at("role").get<std::string>();
            m.fps = j.at("fps").get<double>();
            m.frame_count = j.at("frame_count").get<int>();
            m.width = j.at("width").get<int>();
            m.height = j.at("height").get<int>();
            if (j.contains("degradation")) {
                const auto& d = j["degradation"];
                if (d.contains("K")) m.degradation_K = d["K"].get<int>();
                if (d.contains("tau")) m.degradation_tau = d["tau"].get<int>();
            }
            if (j.contains("provenance")) {
                const auto& p = j["provenance"];
                if (p.contains("seed")) m.seed = p["seed"].get<uint64_t>();
                if (p.contains("source")) m.source = p["source"].get<std::string>();
                if (p.contains("tool_version")) m.tool_version = p["tool_version"].get<std::string>();
            }
            if (j.contains("config_hash")) m.config_hash = j["config_hash"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw invalid_input(std::string("manifest: ") + e.what());
        }
        if (m.fps <= 0) throw invalid_input("manifest: fps must be positive");
        if (m.frame_count < 0) throw invalid_input("manifest: negative frame_count");
        return m;
    }

    void save(const std::filesystem::path& dir) const {
        std::ofstream f(dir / "manifest.json");
        if (!f) throw invalid_input("manifest: cannot write to " + dir.string());
        f << to_json().dump(2) << "\n";
    }

    static Manifest load(const std::filesystem::path& dir) {
        std::ifstream f(dir / "manifest.json");
        if (!f) throw invalid_input("manifest: missing manifest.json in " + dir.string());
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw invalid_input(std::string("manifest: parse error: ") + e.what());
        }
        return from_json(j);
    }

    // Checks frame files on disk against the declared count before any heavy work.
    void validate_against_dir(const std::filesystem::path& dir) const {
        int found = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.path().extension() == ".png") ++found;
        if (found != frame_count)
            throw invalid_input("manifest: frame_count " + std::to_string(frame_count) +
                                " does not match " + std::to_string(found) + " PNGs in " +
                                dir.string());
    }
};

}  // namespace bvi
