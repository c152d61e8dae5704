#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tessera/profiles.hpp"

namespace tessera {

struct Footprint {
  int start = 0;
  int width = 1;
  bool operator==(const Footprint&) const = default;
};

/// Where each MIG profile may sit on a GPU. Data, not code: the defaults
/// describe a 7-slice device and a JSON file can replace them.
struct MigGeometry {
  int slices_per_gpu = 7;
  std::map<MigProfile, std::vector<Footprint>> placements;  // allowed starts, in preference order

  static MigGeometry defaults();
  static MigGeometry parse(std::string_view json_text);  // throws ConfigError
  static MigGeometry load(const std::filesystem::path& file);
  std::string to_json() const;
  /// FNV-1a 64 of the canonical JSON form.
  std::uint64_t hash() const;
  void validate() const;
  int max_width(MigProfile p) const;
  bool operator==(const MigGeometry&) const = default;
};

struct PlacedSegment {
  std::size_t instance = 0;  // index into the packed list
  MigProfile mig = MigProfile::g1;
  int start = 0;
  int width = 1;
};

struct GpuLayout {
  std::vector<PlacedSegment> segments;  // by start slice
};

struct DeploymentPlan {
  std::vector<GpuLayout> gpus;
  std::vector<std::size_t> unplaced;

  bool ok() const { return unplaced.empty(); }
  int gpus_used() const;
  int footprint_slices() const;  // sum of placed widths
};

/// Greedy first-fit-decreasing by footprint width. MPS concurrency does not
/// matter: all processes of a segment share one MIG instance.
DeploymentPlan pack(std::span<const SegmentType> instances, int gpu_count,
                    const MigGeometry& geometry = MigGeometry::defaults());

/// Smallest GPU count for which pack() places everything.
int min_gpus(std::span<const SegmentType> instances,
             const MigGeometry& geometry = MigGeometry::defaults());

/// Overlapping or disallowed footprints in a plan; zero for any plan pack() returns.
int geometry_violations(const DeploymentPlan& plan, const MigGeometry& geometry);

/// One row per GPU, one character per slice: a letter per segment, '.' for free.
std::string render(const DeploymentPlan& plan, const MigGeometry& geometry);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace tessera
