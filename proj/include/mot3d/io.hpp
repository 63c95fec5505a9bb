#pragma once

#include "mot3d/association.hpp"
#include "mot3d/config.hpp"
#include "mot3d/detection.hpp"
#include "mot3d/pipeline.hpp"
#include "mot3d/scene_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mot3d {

inline constexpr int kFormatVersion = 1;

/// Base64 of raw little-endian bytes.
std::string to_base64(std::span<const std::uint8_t> bytes);
/// Throws FormatError on characters outside the alphabet.
std::vector<std::uint8_t> from_base64(const std::string& text);

/// Point list as base64 of x,y,z little-endian float64 triples.
std::string encode_points(std::span<const Vec3> points);
PointCloud decode_points(const std::string& text);

void to_json(Json& j, const Pose7& p);
void from_json(const Json& j, Pose7& p);
void to_json(Json& j, const Box2& b);
void from_json(const Json& j, Box2& b);
void to_json(Json& j, const Box3& b);
void from_json(const Json& j, Box3& b);
void to_json(Json& j, const CameraModel& c);
void from_json(const Json& j, CameraModel& c);
void to_json(Json& j, const OccupancyGrid& g);
void from_json(const Json& j, OccupancyGrid& g);
void to_json(Json& j, const DetectionRecord& d);
void from_json(const Json& j, DetectionRecord& d);
void to_json(Json& j, const FilterParams& p);
void from_json(const Json& j, FilterParams& p);
void to_json(Json& j, const PipelineParams& p);
void from_json(const Json& j, PipelineParams& p);

namespace sim {
void to_json(Json& j, const SceneConfig& c);
void from_json(const Json& j, SceneConfig& c);
void to_json(Json& j, const NoiseModel& n);
void from_json(const Json& j, NoiseModel& n);
}  // namespace sim

/// Shared text conventions: two-space indented JSON with a trailing newline.
std::string dump_json(const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
/// Parses and checks format_version and kind.
Json read_versioned(const std::filesystem::path& path, const std::string& kind);

// Sequence files: <id>.seq.json plus the <id>.grids.bin sidecar.
//
// Sidecar layout, all integers little-endian uint32:
//   "M3DG" | version | grid count | per grid: resolution, byte length, bytes
// where the bytes are OccupancyGrid::pack() (x fastest, then y, then z; bit i
// of byte k is cell 8k+i). Grids appear in object order.
std::vector<std::uint8_t> encode_grid_sidecar(std::span<const OccupancyGrid> grids);
std::vector<OccupancyGrid> decode_grid_sidecar(std::span<const std::uint8_t> bytes);

void write_sequence(const std::filesystem::path& dir, const std::string& id, const sim::SceneSequence& seq);
sim::SceneSequence read_sequence(const std::filesystem::path& dir, const std::string& id);

/// <id>.det.json: the camera and the record list of every frame. Carries
/// everything tracking needs, so real data can come without a sequence file.
struct DetectionFile {
  std::string id;
  std::vector<CameraModel> cameras;
  FrameDetections detections;
};

void write_detections(const std::filesystem::path& path, const DetectionFile& file);
DetectionFile read_detections(const std::filesystem::path& path);

struct IndexEntry {
  std::string id;
  /// Paths relative to the index file's directory; sequence is empty when
  /// there is no ground truth.
  std::string sequence;
  std::string detections;
};

void write_index(const std::filesystem::path& path, std::span<const IndexEntry> entries);
std::vector<IndexEntry> read_index(const std::filesystem::path& path);

/// Loads every indexed sequence with its detections and ground truth.
std::vector<SequenceData> load_dataset(const std::filesystem::path& dir);

Json tracklets_to_json(const std::string& id, int frames, std::span<const Tracklet> tracklets);
std::vector<Tracklet> tracklets_from_json(const Json& j, int* frames = nullptr);

}  // namespace mot3d
