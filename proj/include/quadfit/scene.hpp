#pragma once

// Scene manifest plumbing shared by the subcommands: per-frame parameter
// files and the camera records stored in the manifest.

#include "quadfit/camera.hpp"
#include "quadfit/model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace quadfit::scene {

/// A directory argument resolves to `<dir>/manifest.json`.
std::filesystem::path manifest_path(const std::filesystem::path& arg);

/// Entry of the manifest resolved against its directory; nullopt when absent.
std::optional<std::filesystem::path> manifest_entry(const std::filesystem::path& manifest, const std::string& key);

/// Intrinsics and frame count of a manifest.
struct ManifestInfo {
  int frames = 0;
  camera::Intrinsics intrinsics;
};
ManifestInfo read_info(const std::filesystem::path& manifest);

/// JSON: {"frames": [{"beta": [...], "theta": [...], "limb_scales": [...],
/// "translation": [x, y, z], "vertex_offsets": [x0, y0, z0, x1, ...]}]}.
/// Offsets are omitted when identically zero.
void write_params(const std::filesystem::path& path, const std::vector<model::FrameParams>& params);
std::vector<model::FrameParams> read_params(const std::filesystem::path& path, const model::QuadTemplate& tpl);

/// Cameras live in the manifest under "cameras" as row-major rotation and
/// translation per frame.
std::vector<camera::CameraFrame> read_cameras(const std::filesystem::path& manifest, const std::string& key = "cameras");
void write_cameras(const std::filesystem::path& manifest, const std::vector<camera::CameraFrame>& cams,
                   const std::string& key = "cameras");

/// Merges `key: value` (JSON text) into the manifest, keeping other keys.
void set_manifest_entry(const std::filesystem::path& manifest, const std::string& key, const std::string& json_value);

}  // namespace quadfit::scene
