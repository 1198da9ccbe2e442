#include "quadfit/cues.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace quadfit::cues {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- masks

bool ObjectMask::in_bounds(const Eigen::Vector2d& p) const {
  const double x = std::round(p.x()), y = std::round(p.y());
  return x >= 0 && y >= 0 && x < width_ && y < height_;
}

bool ObjectMask::contains(const Eigen::Vector2d& p) const {
  if (!std::isfinite(p.x()) || !std::isfinite(p.y()) || !in_bounds(p)) return false;
  return at(static_cast<int>(std::round(p.x())), static_cast<int>(std::round(p.y())));
}

std::size_t ObjectMask::area() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

std::vector<Eigen::Vector2d> ObjectMask::foreground() const {
  std::vector<Eigen::Vector2d> out;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (at(x, y)) out.emplace_back(x, y);
  return out;
}

std::vector<Eigen::Vector2d> ObjectMask::boundary() const {
  std::vector<Eigen::Vector2d> out;
  auto bg = [&](int x, int y) { return x < 0 || y < 0 || x >= width_ || y >= height_ || !at(x, y); };
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (at(x, y) && (bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1))) out.emplace_back(x, y);
  return out;
}

std::string ObjectMask::to_rle() const {
  std::ostringstream os;
  os << width_ << ' ' << height_ << ' ';
  std::uint8_t cur = 0;
  std::size_t run = 0;
  bool first = true;
  for (std::uint8_t b : bits_) {
    if (b == cur) {
      ++run;
      continue;
    }
    os << (first ? "" : ",") << run;
    first = false;
    cur = b;
    run = 1;
  }
  os << (first ? "" : ",") << run;
  return os.str();
}

ObjectMask ObjectMask::from_rle(const std::string& line) {
  std::istringstream is(line);
  long w = 0, h = 0;
  std::string runs;
  if (!(is >> w >> h) || w <= 0 || h <= 0) throw InputError("malformed RLE header");
  is >> runs;
  ObjectMask m(static_cast<int>(w), static_cast<int>(h));
  std::size_t pos = 0;
  std::uint8_t cur = 0;
  std::size_t start = 0;
  const std::size_t total = m.bits_.size();
  while (start < runs.size()) {
    std::size_t end = runs.find(',', start);
    if (end == std::string::npos) end = runs.size();
    const std::string tok = runs.substr(start, end - start);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
      throw InputError("malformed RLE run '" + tok + "'");
    const std::size_t len = std::stoull(tok);
    if (pos + len > total) throw InputError("RLE runs exceed W*H");
    std::fill_n(m.bits_.begin() + pos, len, cur);
    pos += len;
    cur ^= 1;
    start = end + 1;
  }
  if (pos != total)
    throw InputError("RLE runs total " + std::to_string(pos) + " but W*H = " + std::to_string(total));
  return m;
}

// ---------------------------------------------------------------- sampling

std::array<int, 4> allocate_part_counts(const std::array<std::size_t, 4>& areas, int n) {
  std::array<int, 4> counts{0, 0, 0, 0};
  std::size_t total = 0;
  int largest = -1;
  for (int p = 0; p < 4; ++p) {
    total += areas[p];
    if (areas[p] > 0 && (largest < 0 || areas[p] > areas[largest])) largest = p;
  }
  if (total == 0 || n <= 0) return counts;
  int sum = 0;
  for (int p = 0; p < 4; ++p) {
    if (areas[p] == 0) continue;
    counts[p] = static_cast<int>(std::lround(static_cast<double>(n) * static_cast<double>(areas[p]) / total));
    counts[p] = std::max(counts[p], 1);
    sum += counts[p];
  }
  counts[largest] += n - sum;
  if (counts[largest] < 1) counts[largest] = 1;
  return counts;
}

std::vector<PartSample> sample_part_points(const PartMasks& masks, int n_samples, std::uint64_t seed) {
  std::array<std::vector<Eigen::Vector2d>, 4> pixels;
  std::array<std::size_t, 4> areas{};
  for (int p = 0; p < 4; ++p) {
    pixels[p] = masks.masks[p].width() > 0 ? masks.masks[p].foreground() : std::vector<Eigen::Vector2d>{};
    areas[p] = pixels[p].size();
  }
  const std::array<int, 4> counts = allocate_part_counts(areas, n_samples);
  std::mt19937_64 rng(seed);
  std::vector<PartSample> out;
  out.reserve(n_samples);
  for (int p = 0; p < 4; ++p) {
    if (counts[p] == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, pixels[p].size() - 1);
    for (int k = 0; k < counts[p]; ++k) out.push_back({pixels[p][pick(rng)], kAllParts[p], masks.confidence[p]});
  }
  return out;
}

namespace {

std::uint64_t frame_seed(std::uint64_t seed, int frame) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), 0x70617274u};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (std::uint64_t(out[0]) << 32) | out[1];
}

}  // namespace

std::vector<std::vector<PartSample>> sample_part_points(const std::vector<PartMasks>& masks, int n_samples,
                                                        std::uint64_t seed) {
  std::vector<std::vector<PartSample>> out(masks.size());
  for (std::size_t t = 0; t < masks.size(); ++t)
    out[t] = sample_part_points(masks[t], n_samples, frame_seed(seed, static_cast<int>(t)));
  return out;
}

// ---------------------------------------------------------------- filtering

CueSet fallback_fill(CueSet cues) {
  if (cues.frames.empty()) return cues;
  if (cues.frames[0].parts.empty()) throw InputError("frame 0 has no part samples; nothing to inherit from");
  if (cues.frames[0].corrs.empty()) throw InputError("frame 0 has no pixel correspondences; nothing to inherit from");
  for (std::size_t t = 1; t < cues.frames.size(); ++t) {
    FrameCues& f = cues.frames[t];
    if (f.parts.empty()) {
      f.parts = cues.frames[t - 1].parts;
      f.parts_inherited = true;
      ++cues.report.frames_parts_inherited;
    }
    if (f.corrs.empty()) {
      f.corrs = cues.frames[t - 1].corrs;
      f.corrs_inherited = true;
      ++cues.report.frames_corrs_inherited;
    }
  }
  return cues;
}

void apply_filters(CueSet& cues, int num_template_vertices) {
  for (auto& pm : cues.part_masks)
    for (Part p : {Part::Feet, Part::Tail}) {
      ObjectMask& m = pm.masks[part_index(p)];
      if (pm.confidence[part_index(p)] <= kPartConfidence && !m.empty()) {
        m = ObjectMask(m.width(), m.height());
        ++cues.report.parts_low_confidence;
      }
    }
  for (int t = 0; t < cues.num_frames; ++t) {
    auto& corrs = cues.frames[t].corrs;
    std::vector<PixelCorr> kept;
    kept.reserve(corrs.size());
    for (const PixelCorr& c : corrs) {
      if (num_template_vertices >= 0 && (c.vertex_id < 0 || c.vertex_id >= num_template_vertices))
        throw InputError("frame " + std::to_string(t) + ": vertex_id " + std::to_string(c.vertex_id) +
                         " out of range [0, " + std::to_string(num_template_vertices) + ")");
      if (!(c.confidence > kCorrConfidence)) {
        ++cues.report.corrs_low_confidence;
      } else if (!cues.masks[t].contains(c.pixel)) {
        ++cues.report.corrs_outside_mask;
      } else {
        kept.push_back(c);
      }
    }
    corrs = std::move(kept);
  }
  std::vector<Track> kept;
  for (Track& tr : cues.tracks) {
    bool ok = true;
    for (int t = 0; t < cues.num_frames && ok; ++t)
      if (tr.valid[t] && !cues.masks[t].contains(tr.positions[t])) ok = false;
    if (ok) kept.push_back(std::move(tr));
    else ++cues.report.tracks_dropped;
  }
  cues.tracks = std::move(kept);
}

// ---------------------------------------------------------------- files

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<ObjectMask> read_rle_file(const fs::path& path, int frames, int width, int height) {
  const auto lines = read_lines(path);
  if (static_cast<int>(lines.size()) != frames)
    throw InputError(path.string() + ": has " + std::to_string(lines.size()) + " frames, manifest says " +
                     std::to_string(frames));
  std::vector<ObjectMask> out;
  for (int t = 0; t < frames; ++t) {
    try {
      out.push_back(ObjectMask::from_rle(lines[t]));
    } catch (const InputError& e) {
      throw InputError(path.string() + " frame " + std::to_string(t) + ": " + e.what());
    }
    if (out.back().width() != width || out.back().height() != height)
      throw InputError(path.string() + " frame " + std::to_string(t) + ": mask size differs from image_size");
  }
  return out;
}

void write_rle_file(const fs::path& path, const std::vector<const ObjectMask*>& masks) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const ObjectMask* m : masks) out << m->to_rle() << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(',', start);
    out.push_back(line.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

bool is_header(const std::string& line) {
  return !line.empty() && !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '-');
}

double parse_double(const std::string& s, const fs::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(file.string() + " line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

long parse_int(const std::string& s, const fs::path& file, std::size_t line) {
  const double v = parse_double(s, file, line);
  if (v != std::floor(v)) throw InputError(file.string() + " line " + std::to_string(line) + ": expected integer");
  return static_cast<long>(v);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path resolve(const fs::path& base, const json& doc, const char* key) {
  return base / doc.at(key).get<std::string>();
}

}  // namespace

Features read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::uint32_t hdr[2];
  in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  if (!in) throw InputError(path.string() + ": truncated header");
  Features f;
  f.dim = static_cast<int>(hdr[1]);
  f.frames.resize(hdr[0]);
  for (auto& v : f.frames) {
    v.resize(f.dim);
    in.read(reinterpret_cast<char*>(v.data()), sizeof(float) * f.dim);
    if (!in) throw InputError(path.string() + ": truncated feature data");
  }
  return f;
}

void write_features(const Features& f, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::uint32_t hdr[2] = {static_cast<std::uint32_t>(f.frames.size()), static_cast<std::uint32_t>(f.dim)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  for (const auto& v : f.frames) out.write(reinterpret_cast<const char*>(v.data()), sizeof(float) * f.dim);
}

CueSet load_cues(const fs::path& manifest, const LoadOptions& options) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open manifest " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("manifest " + manifest.string() + ": " + e.what());
  }
  const fs::path base = manifest.parent_path();
  CueSet cues;
  try {
    cues.num_frames = doc.at("frames").get<int>();
    if (cues.num_frames < 1) throw InputError("manifest: frames must be >= 1");
    const auto size = doc.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw InputError("manifest: image_size must be [W, H]");
    const json& k = doc.at("intrinsics");
    cues.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                       k.at("cy").get<double>(), size[0], size[1]};
    cues.intrinsics.validate();
    cues.part_samples_per_frame = options.part_samples.value_or(doc.value("part_samples", kDefaultPartSamples));
    cues.part_seed = options.part_seed.value_or(doc.value("part_seed", std::uint64_t{0}));
    if (cues.part_samples_per_frame < 4) throw InputError("manifest: part_samples must be >= 4");
    const int T = cues.num_frames, W = size[0], H = size[1];

    cues.masks = read_rle_file(resolve(base, doc, "masks"), T, W, H);

    cues.part_masks.assign(T, PartMasks{});
    const json& pm = doc.at("part_masks");
    for (Part p : kAllParts) {
      const std::string name(part_name(p));
      if (!pm.contains(name)) {
        for (auto& f : cues.part_masks) f.masks[part_index(p)] = ObjectMask(W, H);
        continue;
      }
      const auto masks = read_rle_file(base / pm.at(name).get<std::string>(), T, W, H);
      for (int t = 0; t < T; ++t) cues.part_masks[t].masks[part_index(p)] = masks[t];
    }
    if (doc.contains("part_confidence")) {
      for (const auto& [name, values] : doc.at("part_confidence").items()) {
        const Part p = parse_part(name);
        const auto conf = values.get<std::vector<double>>();
        if (static_cast<int>(conf.size()) != T)
          throw InputError("manifest: part_confidence." + name + " has " + std::to_string(conf.size()) +
                           " frames, expected " + std::to_string(T));
        for (int t = 0; t < T; ++t) cues.part_masks[t].confidence[part_index(p)] = conf[t];
      }
    }

    cues.frames.assign(T, FrameCues{});
    const fs::path corr_path = resolve(base, doc, "pixel_correspondences");
    const auto corr_lines = read_lines(corr_path);
    for (std::size_t i = 0; i < corr_lines.size(); ++i) {
      if (i == 0 && is_header(corr_lines[i])) continue;
      const auto f = split_csv(corr_lines[i]);
      if (f.size() != 5) throw InputError(corr_path.string() + " line " + std::to_string(i + 1) + ": expected 5 fields");
      const long t = parse_int(f[0], corr_path, i + 1);
      if (t < 0 || t >= T)
        throw InputError(corr_path.string() + " line " + std::to_string(i + 1) + ": frame " + std::to_string(t) +
                         " outside [0, " + std::to_string(T) + ")");
      PixelCorr c{{parse_double(f[1], corr_path, i + 1), parse_double(f[2], corr_path, i + 1)},
                  static_cast<int>(parse_int(f[3], corr_path, i + 1)), parse_double(f[4], corr_path, i + 1)};
      if (options.num_template_vertices >= 0 && (c.vertex_id < 0 || c.vertex_id >= options.num_template_vertices))
        throw InputError(corr_path.string() + " line " + std::to_string(i + 1) + " (frame " + std::to_string(t) +
                         "): vertex_id " + std::to_string(c.vertex_id) + " out of range [0, " +
                         std::to_string(options.num_template_vertices) + ")");
      cues.frames[t].corrs.push_back(c);
    }

    const fs::path track_path = resolve(base, doc, "tracks");
    const auto track_lines = read_lines(track_path);
    std::map<long, std::size_t> by_id;
    for (std::size_t i = 0; i < track_lines.size(); ++i) {
      if (i == 0 && is_header(track_lines[i])) continue;
      const auto f = split_csv(track_lines[i]);
      if (f.size() != 6) throw InputError(track_path.string() + " line " + std::to_string(i + 1) + ": expected 6 fields");
      const long id = parse_int(f[0], track_path, i + 1);
      const long anchor = parse_int(f[1], track_path, i + 1);
      const long t = parse_int(f[2], track_path, i + 1);
      if (t < 0 || t >= T)
        throw InputError(track_path.string() + " line " + std::to_string(i + 1) + ": frame " + std::to_string(t) +
                         " outside [0, " + std::to_string(T) + ")");
      if (anchor < 1 || anchor > T)
        throw InputError(track_path.string() + " line " + std::to_string(i + 1) + ": anchor " +
                         std::to_string(anchor) + " outside [1, " + std::to_string(T) + "]");
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        Track tr;
        tr.id = static_cast<int>(id);
        tr.anchor = static_cast<int>(anchor);
        tr.positions.assign(T, Eigen::Vector2d::Zero());
        tr.valid.assign(T, 0);
        cues.tracks.push_back(std::move(tr));
        it = by_id.emplace(id, cues.tracks.size() - 1).first;
      }
      Track& tr = cues.tracks[it->second];
      if (tr.anchor != anchor)
        throw InputError(track_path.string() + " line " + std::to_string(i + 1) + ": inconsistent anchor for track " +
                         std::to_string(id));
      tr.positions[t] = {parse_double(f[3], track_path, i + 1), parse_double(f[4], track_path, i + 1)};
      tr.valid[t] = parse_int(f[5], track_path, i + 1) != 0;
    }

    if (doc.contains("features") && !doc.at("features").is_null()) {
      const fs::path fpath = resolve(base, doc, "features");
      Features f = read_features(fpath);
      if (static_cast<int>(f.frames.size()) != T)
        throw InputError(fpath.string() + ": has " + std::to_string(f.frames.size()) + " frames, manifest says " +
                         std::to_string(T));
      cues.features = std::move(f);
    }
  } catch (const json::exception& e) {
    throw InputError("manifest " + manifest.string() + ": " + e.what());
  }

  apply_filters(cues, options.num_template_vertices);
  const auto samples = sample_part_points(cues.part_masks, cues.part_samples_per_frame, cues.part_seed);
  for (int t = 0; t < cues.num_frames; ++t) cues.frames[t].parts = samples[t];
  return cues;
}

void save_cues(const CueSet& cues, const fs::path& manifest, const std::string& extra_json) {
  const fs::path base = manifest.parent_path();
  if (!base.empty()) fs::create_directories(base);
  json doc = json::parse(extra_json);
  // Existing manifest keys that are not cue-related survive a rewrite.
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json old = json::parse(in, nullptr, false);
    if (old.is_object())
      for (const auto& [k, v] : old.items())
        if (!doc.contains(k)) doc[k] = v;
  }
  doc["frames"] = cues.num_frames;
  doc["image_size"] = {cues.intrinsics.width, cues.intrinsics.height};
  doc["intrinsics"] = {{"fx", cues.intrinsics.fx}, {"fy", cues.intrinsics.fy}, {"cx", cues.intrinsics.cx},
                       {"cy", cues.intrinsics.cy}};
  doc["part_samples"] = cues.part_samples_per_frame;
  doc["part_seed"] = cues.part_seed;

  std::vector<const ObjectMask*> ms;
  for (const auto& m : cues.masks) ms.push_back(&m);
  write_rle_file(base / "masks.rle", ms);
  doc["masks"] = "masks.rle";

  json pm = json::object(), pc = json::object();
  for (Part p : kAllParts) {
    const std::string name(part_name(p));
    std::vector<const ObjectMask*> parts;
    std::vector<double> conf;
    for (const auto& f : cues.part_masks) {
      parts.push_back(&f.masks[part_index(p)]);
      conf.push_back(f.confidence[part_index(p)]);
    }
    write_rle_file(base / ("parts_" + name + ".rle"), parts);
    pm[name] = "parts_" + name + ".rle";
    pc[name] = conf;
  }
  doc["part_masks"] = pm;
  doc["part_confidence"] = pc;

  {
    std::ofstream out(base / "corrs.csv");
    out << "frame,x,y,vertex_id,confidence\n";
    for (int t = 0; t < cues.num_frames; ++t)
      for (const PixelCorr& c : cues.frames[t].corrs)
        out << t << ',' << fmt(c.pixel.x()) << ',' << fmt(c.pixel.y()) << ',' << c.vertex_id << ','
            << fmt(c.confidence) << '\n';
  }
  doc["pixel_correspondences"] = "corrs.csv";
  {
    std::ofstream out(base / "tracks.csv");
    out << "traj_id,anchor,frame,x,y,valid\n";
    for (const Track& tr : cues.tracks)
      for (int t = 0; t < cues.num_frames; ++t)
        out << tr.id << ',' << tr.anchor << ',' << t << ',' << fmt(tr.positions[t].x()) << ','
            << fmt(tr.positions[t].y()) << ',' << int(tr.valid[t]) << '\n';
  }
  doc["tracks"] = "tracks.csv";
  if (cues.features) {
    write_features(*cues.features, base / "features.bin");
    doc["features"] = "features.bin";
  }
  std::ofstream out(manifest);
  if (!out) throw InputError("cannot write " + manifest.string());
  out << doc.dump(2) << '\n';
}

}  // namespace quadfit::cues
