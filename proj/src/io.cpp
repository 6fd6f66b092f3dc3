#include "lopguard/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "lopguard/binio.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/json_codec.hpp"

namespace lopguard {

using nlohmann::json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::car: return "car";
    case Category::pedestrian: return "pedestrian";
    case Category::cyclist: return "cyclist";
    case Category::unknown: return "unknown";
  }
  return "unknown";
}

Category category_from_string(std::string_view s) {
  if (s == "car") return Category::car;
  if (s == "pedestrian") return Category::pedestrian;
  if (s == "cyclist") return Category::cyclist;
  if (s == "unknown") return Category::unknown;
  throw ValueError("unknown category '" + std::string(s) + "'");
}

// --------------------------------------------------------------------------
// Binary point files
// --------------------------------------------------------------------------

PointCloud read_points_bin(std::span<const std::byte> bytes, std::uint64_t frame_id) {
  if (bytes.size() % 16 != 0) {
    throw LengthError("point buffer length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  PointCloud pc;
  pc.frame_id = frame_id;
  pc.points.reserve(bytes.size() / 16);
  binio::Reader r(bytes);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < bytes.size() / 16; ++i) {
    const double x = r.f32(), y = r.f32(), z = r.f32();
    double in = r.f32();
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(in)) {
      throw ValueError("non-finite value in point " + std::to_string(i));
    }
    if (in < 0.0 || in > 1.0) {
      in = std::clamp(in, 0.0, 1.0);
      ++clamped;
    }
    pc.points.push_back({x, y, z, in});
  }
  if (clamped > 0) spdlog::warn("clamped {} intensities into [0, 1]", clamped);
  return pc;
}

std::vector<std::byte> write_points_bin(const PointCloud& pc) {
  binio::Writer w;
  for (const auto& p : pc.points) {
    w.f32(static_cast<float>(p.x));
    w.f32(static_cast<float>(p.y));
    w.f32(static_cast<float>(p.z));
    w.f32(static_cast<float>(p.intensity));
  }
  return w.take();
}

PointCloud load_points_bin(const std::filesystem::path& path, std::uint64_t frame_id) {
  const auto bytes = read_binary_file(path);
  return read_points_bin(bytes, frame_id);
}

// --------------------------------------------------------------------------
// JSON helpers
// --------------------------------------------------------------------------

namespace jsonc {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path.empty() ? "<root>" : path, "expected object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "non-finite number");
  return v;
}

json box_to_json(const Box3D& b) { return json::array({b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw}); }

Box3D box_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 7) throw SchemaError(path, "expected [cx,cy,cz,l,w,h,yaw]");
  std::array<double, 7> v{};
  for (std::size_t i = 0; i < 7; ++i) v[i] = number(j[i], path + "[" + std::to_string(i) + "]");
  if (!(v[3] > 0 && v[4] > 0 && v[5] > 0)) throw SchemaError(path, "extents must be positive");
  // Stored yaw is kept verbatim so documents round-trip exactly.
  return Box3D{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

Category category_at(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected string");
  try {
    return category_from_string(j.get<std::string>());
  } catch (const ValueError& e) {
    throw SchemaError(path, e.what());
  }
}

json detection_to_json(const Detection& d) {
  return json{{"category", std::string(to_string(d.category))},
              {"box", box_to_json(d.box)},
              {"confidence", d.confidence}};
}

Detection detection_from_json(const json& j, const std::string& path) {
  Detection d;
  d.category = category_at(require(j, "category", path), path + ".category");
  d.box = box_from_json(require(j, "box", path), path + ".box");
  d.confidence = number(require(j, "confidence", path), path + ".confidence");
  if (d.confidence < 0.0 || d.confidence > 1.0) {
    throw SchemaError(path + ".confidence", "outside [0, 1]");
  }
  return d;
}

std::vector<Detection> detections_from_json(const json& arr, const std::string& path) {
  if (!arr.is_array()) throw SchemaError(path, "expected array");
  std::vector<Detection> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(detection_from_json(arr[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", e.what());
  }
}

std::uint64_t frame_id_from(const json& doc) {
  const auto& fj = require(doc, "frame_id", "");
  if (!fj.is_number_integer() || fj.get<std::int64_t>() < 0) {
    throw SchemaError("frame_id", "expected non-negative integer");
  }
  return fj.get<std::uint64_t>();
}

}  // namespace jsonc

using namespace jsonc;

Scene read_scene_json(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) throw SchemaError("<root>", "expected object");
  Scene s;
  // "cloud" in the data model is the (frame_id, points) pair.
  if (!doc.contains("points") && !doc.contains("frame_id")) throw SchemaError("cloud", "missing");
  s.cloud.frame_id = frame_id_from(doc);
  const auto& pts = require(doc, "points", "");
  if (!pts.is_array()) throw SchemaError("points", "expected array");
  s.cloud.points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string path = "points[" + std::to_string(i) + "]";
    const auto& pj = pts[i];
    if (!pj.is_array() || pj.size() != 4) throw SchemaError(path, "expected [x,y,z,intensity]");
    Point p{number(pj[0], path + "[0]"), number(pj[1], path + "[1]"), number(pj[2], path + "[2]"),
            number(pj[3], path + "[3]")};
    if (p.intensity < 0.0 || p.intensity > 1.0) throw SchemaError(path + "[3]", "intensity outside [0, 1]");
    s.cloud.points.push_back(p);
  }
  const auto& gts = require(doc, "ground_truth", "");
  if (!gts.is_array()) throw SchemaError("ground_truth", "expected array");
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::string path = "ground_truth[" + std::to_string(i) + "]";
    GroundTruthObject g;
    g.category = category_at(require(gts[i], "category", path), path + ".category");
    g.box = box_from_json(require(gts[i], "box", path), path + ".box");
    if (auto it = gts[i].find("occluded"); it != gts[i].end()) {
      if (!it->is_boolean()) throw SchemaError(path + ".occluded", "expected boolean");
      g.occluded = it->get<bool>();
    }
    s.ground_truth.push_back(g);
  }
  if (auto it = doc.find("detections"); it != doc.end() && !it->is_null()) {
    s.detections = detections_from_json(*it, "detections");
  }
  const auto& prov = require(doc, "provenance", "");
  if (!prov.is_string()) throw SchemaError("provenance", "expected string");
  s.provenance = prov.get<std::string>();
  return s;
}

std::string write_scene_json(const Scene& scene) {
  json doc;
  doc["frame_id"] = scene.cloud.frame_id;
  json pts = json::array();
  for (const auto& p : scene.cloud.points) pts.push_back(json::array({p.x, p.y, p.z, p.intensity}));
  doc["points"] = std::move(pts);
  json gts = json::array();
  for (const auto& g : scene.ground_truth) {
    json gj{{"category", std::string(to_string(g.category))}, {"box", box_to_json(g.box)}};
    if (g.occluded) gj["occluded"] = true;
    gts.push_back(std::move(gj));
  }
  doc["ground_truth"] = std::move(gts);
  if (scene.detections) {
    json dets = json::array();
    for (const auto& d : *scene.detections) dets.push_back(detection_to_json(d));
    doc["detections"] = std::move(dets);
  }
  doc["provenance"] = scene.provenance;
  return doc.dump();
}

std::vector<Detection> read_detections_json(std::string_view text, std::uint64_t* frame_id) {
  const json doc = parse_document(text);
  if (!doc.is_object()) throw SchemaError("<root>", "expected object");
  const auto fid = frame_id_from(doc);
  if (frame_id) *frame_id = fid;
  return detections_from_json(require(doc, "detections", ""), "detections");
}

std::string write_detections_json(std::span<const Detection> dets, std::uint64_t frame_id) {
  json arr = json::array();
  for (const auto& d : dets) arr.push_back(detection_to_json(d));
  return json{{"frame_id", frame_id}, {"detections", std::move(arr)}}.dump();
}

// --------------------------------------------------------------------------
// Files
// --------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<std::byte> read_binary_file(const std::filesystem::path& path) {
  const std::string s = read_text_file(path);
  std::vector<std::byte> out(s.size());
  std::memcpy(out.data(), s.data(), s.size());
  return out;
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Scene load_scene(const std::filesystem::path& path) { return read_scene_json(read_text_file(path)); }

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  write_text_file(path, write_scene_json(scene));
}

std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("scene_") && name.ends_with(".json")) {
      out.push_back(e.path());
    }
  }
  std::ranges::sort(out);
  return out;
}

std::string scene_file_name(std::uint64_t frame_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06llu.json", static_cast<unsigned long long>(frame_id));
  return buf;
}

// --------------------------------------------------------------------------
// Calibration
// --------------------------------------------------------------------------

Box3D cam_box_to_lidar(const CameraBox& b, const CalibMatrix& calib) {
  const auto& R = calib.rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += R[k][i] * R[k][j];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-6) {
        throw CalibError("calibration rotation is not orthonormal");
      }
    }
  }
  const std::array<double, 3> d{b.x - calib.translation[0], b.y - calib.translation[1],
                                b.z - calib.translation[2]};
  std::array<double, 3> p{};
  for (int i = 0; i < 3; ++i) p[i] = R[0][i] * d[0] + R[1][i] * d[1] + R[2][i] * d[2];
  return make_box(p[0], p[1], p[2], b.l, b.w, b.h, -b.ry - std::numbers::pi / 2.0);
}

namespace {

std::vector<double> parse_numbers(std::string_view line) {
  std::vector<double> out;
  std::istringstream ss{std::string(line)};
  double v;
  while (ss >> v) out.push_back(v);
  return out;
}

}  // namespace

CalibMatrix parse_kitti_calib(std::string_view text) {
  std::array<double, 9> r0{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 12> tr{};
  bool have_tr = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const auto vals = parse_numbers(std::string_view(line).substr(colon + 1));
    if (key == "R0_rect" || key == "R_rect") {
      if (vals.size() != 9) throw CalibError("R0_rect needs 9 values");
      std::ranges::copy(vals, r0.begin());
    } else if (key == "Tr_velo_to_cam" || key == "Tr_velo_cam") {
      if (vals.size() != 12) throw CalibError("Tr_velo_to_cam needs 12 values");
      std::ranges::copy(vals, tr.begin());
      have_tr = true;
    }
  }
  if (!have_tr) throw CalibError("missing Tr_velo_to_cam");
  CalibMatrix c;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += r0[i * 3 + k] * tr[k * 4 + j];
      c.rotation[i][j] = acc;
    }
    double t = 0.0;
    for (int k = 0; k < 3; ++k) t += r0[i * 3 + k] * tr[k * 4 + 3];
    c.translation[i] = t;
  }
  return c;
}

std::vector<GroundTruthObject> parse_kitti_labels(std::string_view text, const CalibMatrix& calib) {
  std::vector<GroundTruthObject> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string cls;
    if (!(ls >> cls) || cls == "DontCare") continue;
    const auto v = parse_numbers(std::string_view(line).substr(cls.size()));
    if (v.size() < 14) throw SchemaError("label line " + std::to_string(lineno), "expected 15 fields");
    // truncated occluded alpha bbox(4) h w l x y z ry
    const double h = v[7], w = v[8], l = v[9];
    CameraBox cb{v[10], v[11] - h / 2.0, v[12], l, w, h, v[13]};
    GroundTruthObject g;
    g.category = cls == "Car"          ? Category::car
                 : cls == "Pedestrian" ? Category::pedestrian
                 : cls == "Cyclist"    ? Category::cyclist
                                       : Category::unknown;
    g.box = cam_box_to_lidar(cb, calib);
    out.push_back(g);
  }
  return out;
}

}  // namespace lopguard
