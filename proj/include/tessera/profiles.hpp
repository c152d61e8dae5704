#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tessera/error.hpp"
#include "tessera/model.hpp"

namespace tessera {

enum class MigProfile : std::uint8_t { g1, g1_me, g2, g3, g4, g7 };

inline constexpr std::array<MigProfile, 6> kMigProfiles{MigProfile::g1, MigProfile::g1_me,
                                                        MigProfile::g2, MigProfile::g3,
                                                        MigProfile::g4, MigProfile::g7};
inline constexpr std::array<int, 8> kBatchSizes{1, 2, 4, 8, 16, 32, 64, 128};
inline constexpr int kMaxMps = 4;

std::string_view to_string(MigProfile p);
MigProfile parse_mig_profile(std::string_view s);  // throws ValidationError
/// Compute slices a MIG profile owns (its cost s_n).
int compute_slices(MigProfile p);
/// Memory units (1/8 of device memory) a MIG profile owns.
int memory_units(MigProfile p);
bool is_batch_size(int b);

/// A GPU segment: one MIG instance running `mps` identical MPS processes.
struct SegmentType {
  MigProfile mig = MigProfile::g7;
  int mps = 1;

  int slices() const { return compute_slices(mig); }
  std::string label() const;  // e.g. "2g/mps3"
  auto operator<=>(const SegmentType&) const = default;
};

struct ProfileKey {
  std::string task;
  std::string variant;
  SegmentType segment;
  int batch = 1;
  auto operator<=>(const ProfileKey&) const = default;
};

struct ProfileEntry {
  double latency_ms = 0.0;   // p95 batch latency of one process
  double throughput_rps = 0.0;  // aggregate throughput of the whole segment
  bool operator==(const ProfileEntry&) const = default;
};

/// Offline profiling data: (task, variant, segment, batch) -> latency and
/// throughput. Absent keys are infeasible combinations.
class ProfileTable {
 public:
  using Map = std::map<ProfileKey, ProfileEntry>;

  /// Throws ValidationError on duplicates, non-positive values, batch sizes
  /// outside the domain or an MPS level outside [1,4].
  void insert(const ProfileKey& key, const ProfileEntry& entry, int line = 0);
  const ProfileEntry* find(const ProfileKey& key) const;
  const Map& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool operator==(const ProfileTable&) const = default;

  /// Checks latency is non-decreasing in batch for every (task, variant, segment).
  void check_batch_monotone() const;

 private:
  Map entries_;
};

inline constexpr std::string_view kProfileCsvHeader =
    "task,variant,mig,mps,batch,latency_ms,throughput_rps";

ProfileTable parse_profile_csv(std::string_view text);
ProfileTable load_profile(const std::filesystem::path& file);
/// Rows sorted by key; numbers in shortest round-trip form.
std::string dump_profile_csv(const ProfileTable& table);
void save_profile(const std::filesystem::path& file, const ProfileTable& table);

struct VariantKnobs {
  double base_latency_ms = 10.0;  // batch 1 on a single 1g slice, no MPS sharing
  double memory_units = 0.25;     // per process
};

/// Parameters of the synthetic latency model
///   L = base * b^gamma_b / slices^gamma_s * (1 + delta (k-1)) * jitter(t,v,s)
///   H = k * b * 1000 / L
struct SynthKnobs {
  double gamma_b = 0.7;
  double gamma_s = 0.6;
  double delta = 0.15;
  double jitter = 0.0;  // sigma of a per-(task,variant,segment) log-normal factor
  std::uint64_t seed = 1;
  std::map<std::string, std::map<std::string, VariantKnobs>> variants;  // task -> variant

  void validate() const;  // throws ConfigError
};

SynthKnobs parse_knobs(std::string_view json_text);
SynthKnobs load_knobs(const std::filesystem::path& file);
std::string dump_knobs(const SynthKnobs& knobs);

ProfileTable synth_profile(const AppSpec& app, const SynthKnobs& knobs);

/// Fastest batch-1 latency of any variant on any segment.
double best_latency(const ProfileTable& table, const std::string& task);

struct Observation {
  ProfileKey key;
  double latency_ms = 0.0;
  double throughput_rps = 0.0;
};

struct RefineResult {
  ProfileTable table;
  bool clamped = false;  // latency was clamped to keep batch monotonicity
};

RefineResult refine(const ProfileTable& table, const Observation& obs, double weight = 0.2);

/// Shortest representation that parses back to the same double.
std::string format_number(double x);

}  // namespace tessera
