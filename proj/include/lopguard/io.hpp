#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lopguard/scene.hpp"

namespace lopguard {

// ---------------------------------------------------------------------------
// KITTI velodyne files: packed little-endian float32 (x, y, z, intensity).
// ---------------------------------------------------------------------------

/// Decodes a raw point buffer. Throws LengthError when the size is not a
/// multiple of 16 and ValueError on any non-finite value. Intensities outside
/// [0, 1] are clamped and the number of clamped values is logged.
PointCloud read_points_bin(std::span<const std::byte> bytes, std::uint64_t frame_id = 0);
std::vector<std::byte> write_points_bin(const PointCloud& pc);

PointCloud load_points_bin(const std::filesystem::path& path, std::uint64_t frame_id = 0);

// ---------------------------------------------------------------------------
// Scene JSON (canonical format)
//
//   { "frame_id": int,
//     "points": [[x, y, z, intensity], ...],
//     "ground_truth": [{"category": "car", "box": [cx,cy,cz,l,w,h,yaw],
//                       "occluded": bool (optional)}, ...],
//     "detections": [{"category": ..., "box": [...], "confidence": c}, ...]  (optional),
//     "provenance": string }
// ---------------------------------------------------------------------------

Scene read_scene_json(std::string_view text);
std::string write_scene_json(const Scene& scene);

/// Detection exchange document: {"frame_id": int, "detections": [...]}.
std::vector<Detection> read_detections_json(std::string_view text, std::uint64_t* frame_id = nullptr);
std::string write_detections_json(std::span<const Detection> dets, std::uint64_t frame_id);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::vector<std::byte> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

Scene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const Scene& scene);

/// All `scene_*.json` files of a directory, sorted by name.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);
std::string scene_file_name(std::uint64_t frame_id);

// ---------------------------------------------------------------------------
// Calibration and KITTI label import (one-way into the sensor frame)
// ---------------------------------------------------------------------------

/// Rigid transform mapping sensor (lidar) coordinates into the camera frame:
/// p_cam = rotation * p_lidar + translation.
struct CalibMatrix {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  std::array<double, 3> translation{0, 0, 0};
};

/// Box in the KITTI rectified camera frame (x right, y down, z forward).
/// The center here is the geometric center; `ry` rotates about camera +y.
struct CameraBox {
  double x = 0, y = 0, z = 0;
  double l = 1, w = 1, h = 1;
  double ry = 0;
};

/// p_lidar = R^T (p_cam - t); yaw_lidar = -ry - pi/2 (camera heading +x maps
/// to lidar heading -y); extents unchanged. CalibError if R is not
/// orthonormal within 1e-6.
Box3D cam_box_to_lidar(const CameraBox& box_cam, const CalibMatrix& calib);

/// Parses a KITTI calib file (P0..P3, R0_rect, Tr_velo_to_cam) and composes
/// R0_rect * Tr_velo_to_cam.
CalibMatrix parse_kitti_calib(std::string_view text);

/// Parses a KITTI label_2 file. DontCare rows are skipped; Car, Pedestrian
/// and Cyclist map to their categories, every other class to unknown.
std::vector<GroundTruthObject> parse_kitti_labels(std::string_view text, const CalibMatrix& calib);

}  // namespace lopguard
