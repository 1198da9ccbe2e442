#include "quadfit/scene.hpp"

#include <json.hpp>

#include <fstream>

namespace quadfit::scene {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json(const json& j, std::size_t expected, const fs::path& path, int frame, const char* field) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != expected)
    throw InputError(path.string() + " frame " + std::to_string(frame) + ": " + field + " has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(expected));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

}  // namespace

fs::path manifest_path(const fs::path& arg) { return fs::is_directory(arg) ? arg / "manifest.json" : arg; }

std::optional<fs::path> manifest_entry(const fs::path& manifest, const std::string& key) {
  const json doc = read_json(manifest);
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return manifest.parent_path() / doc.at(key).get<std::string>();
}

ManifestInfo read_info(const fs::path& manifest) {
  const json doc = read_json(manifest);
  try {
    ManifestInfo info;
    info.frames = doc.at("frames").get<int>();
    const auto size = doc.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw InputError(manifest.string() + ": image_size must be [W, H]");
    const json& k = doc.at("intrinsics");
    info.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                       k.at("cy").get<double>(), size[0], size[1]};
    info.intrinsics.validate();
    return info;
  } catch (const json::exception& e) {
    throw InputError(manifest.string() + ": " + e.what());
  }
}

void write_params(const fs::path& path, const std::vector<model::FrameParams>& params) {
  json frames = json::array();
  for (const auto& p : params) {
    json f;
    f["beta"] = to_vec(p.beta);
    f["theta"] = to_vec(p.theta);
    f["limb_scales"] = to_vec(p.limb_scales);
    f["translation"] = {p.translation.x(), p.translation.y(), p.translation.z()};
    if (!p.vertex_offsets.isZero(0.0))
      f["vertex_offsets"] = std::vector<double>(p.vertex_offsets.data(), p.vertex_offsets.data() + p.vertex_offsets.size());
    frames.push_back(std::move(f));
  }
  write_json(path, json{{"frames", frames}});
}

std::vector<model::FrameParams> read_params(const fs::path& path, const model::QuadTemplate& tpl) {
  const json doc = read_json(path);
  std::vector<model::FrameParams> out;
  try {
    int t = 0;
    for (const json& f : doc.at("frames")) {
      model::FrameParams p = model::FrameParams::rest(tpl);
      p.beta = from_json(f.at("beta"), tpl.num_betas(), path, t, "beta");
      p.theta = from_json(f.at("theta"), 3 * tpl.num_joints(), path, t, "theta");
      p.limb_scales = from_json(f.at("limb_scales"), tpl.num_limbs, path, t, "limb_scales");
      p.translation = from_json(f.at("translation"), 3, path, t, "translation");
      if (f.contains("vertex_offsets")) {
        const Eigen::VectorXd o = from_json(f.at("vertex_offsets"), 3 * tpl.num_vertices(), path, t, "vertex_offsets");
        p.vertex_offsets = Eigen::Map<const Points3>(o.data(), tpl.num_vertices(), 3);
      }
      if ((p.limb_scales.array() <= 0.0).any())
        throw InputError(path.string() + " frame " + std::to_string(t) + ": limb_scales must be positive");
      out.push_back(std::move(p));
      ++t;
    }
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return out;
}

std::vector<camera::CameraFrame> read_cameras(const fs::path& manifest, const std::string& key) {
  const ManifestInfo info = read_info(manifest);
  const json doc = read_json(manifest);
  if (!doc.contains(key))
    throw InputError(manifest.string() + ": no '" + key + "' records (run init-cameras first)");
  const json& arr = doc.at(key);
  if (!arr.is_array() || static_cast<int>(arr.size()) != info.frames)
    throw InputError(manifest.string() + ": '" + key + "' must list " + std::to_string(info.frames) + " frames");
  std::vector<camera::CameraFrame> cams;
  int t = 0;
  try {
    for (const json& c : arr) {
      camera::CameraFrame cam;
      cam.intrinsics = info.intrinsics;
      const Eigen::VectorXd r = from_json(c.at("rotation"), 9, manifest, t, "rotation");
      cam.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(r.data());
      cam.translation = from_json(c.at("translation"), 3, manifest, t, "translation");
      try {
        cam.validate();
      } catch (const InputError& e) {
        throw InputError(manifest.string() + " " + key + "[" + std::to_string(t) + "]: " + e.what());
      }
      cams.push_back(cam);
      ++t;
    }
  } catch (const json::exception& e) {
    throw InputError(manifest.string() + ": " + e.what());
  }
  return cams;
}

void write_cameras(const fs::path& manifest, const std::vector<camera::CameraFrame>& cams, const std::string& key) {
  json arr = json::array();
  for (const auto& c : cams) {
    const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> R = c.rotation;
    arr.push_back({{"rotation", std::vector<double>(R.data(), R.data() + 9)},
                   {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}}});
  }
  set_manifest_entry(manifest, key, arr.dump());
}

void set_manifest_entry(const fs::path& manifest, const std::string& key, const std::string& json_value) {
  json doc = read_json(manifest);
  doc[key] = json::parse(json_value);
  write_json(manifest, doc);
}

}  // namespace quadfit::scene
