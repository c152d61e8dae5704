#include "tessera/placement.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tessera {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MigGeometry MigGeometry::defaults() {
  MigGeometry g;
  using P = MigProfile;
  g.placements[P::g1] = {{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}};
  // the last media-extension slot has a single slice left
  g.placements[P::g1_me] = {{0, 2}, {2, 2}, {4, 2}, {6, 1}};
  g.placements[P::g2] = {{0, 2}, {2, 2}, {4, 2}};
  g.placements[P::g3] = {{0, 4}, {4, 3}};
  g.placements[P::g4] = {{0, 4}};
  g.placements[P::g7] = {{0, 7}};
  return g;
}

void MigGeometry::validate() const {
  if (slices_per_gpu < 1) throw ConfigError("geometry needs at least one slice per GPU");
  for (auto p : kMigProfiles) {
    auto it = placements.find(p);
    if (it == placements.end() || it->second.empty())
      throw ConfigError("geometry has no placement for " + std::string(to_string(p)));
    for (const auto& f : it->second)
      if (f.start < 0 || f.width < 1 || f.start + f.width > slices_per_gpu)
        throw ConfigError("footprint of " + std::string(to_string(p)) + " at slice " +
                          std::to_string(f.start) + " exceeds the GPU");
  }
}

int MigGeometry::max_width(MigProfile p) const {
  int w = 0;
  for (const auto& f : placements.at(p)) w = std::max(w, f.width);
  return w;
}

MigGeometry MigGeometry::parse(std::string_view text) {
  MigGeometry g;
  try {
    auto j = nlohmann::json::parse(text);
    g.slices_per_gpu = j.at("slices_per_gpu").get<int>();
    for (auto& [name, list] : j.at("profiles").items()) {
      auto p = parse_mig_profile(name);
      auto& out = g.placements[p];
      for (auto& f : list) out.push_back({f.at("start").get<int>(), f.at("width").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("geometry file: ") + e.what());
  }
  g.validate();
  return g;
}

MigGeometry MigGeometry::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open geometry file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string MigGeometry::to_json() const {
  nlohmann::ordered_json j;
  j["slices_per_gpu"] = slices_per_gpu;
  nlohmann::ordered_json profiles = nlohmann::ordered_json::object();
  for (const auto& [p, list] : placements) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : list) arr.push_back({{"start", f.start}, {"width", f.width}});
    profiles[std::string(to_string(p))] = arr;
  }
  j["profiles"] = profiles;
  return j.dump(2) + "\n";
}

std::uint64_t MigGeometry::hash() const { return fnv1a64(to_json()); }

int DeploymentPlan::gpus_used() const {
  return static_cast<int>(
      std::count_if(gpus.begin(), gpus.end(), [](const auto& g) { return !g.segments.empty(); }));
}

int DeploymentPlan::footprint_slices() const {
  int s = 0;
  for (const auto& g : gpus)
    for (const auto& p : g.segments) s += p.width;
  return s;
}

namespace {

enum class GpuChoice { first_fit, most_free };

DeploymentPlan pack_with(std::span<const SegmentType> instances, int gpu_count, const MigGeometry& geometry,
                         GpuChoice choice) {
  const int width = geometry.slices_per_gpu;
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = instances[a].mig, pb = instances[b].mig;
    const int wa = geometry.max_width(pa), wb = geometry.max_width(pb);
    if (wa != wb) return wa > wb;
    return pa > pb;
  });

  DeploymentPlan plan;
  plan.gpus.resize(gpu_count);
  std::vector<std::vector<bool>> busy(gpu_count, std::vector<bool>(width, false));
  std::vector<int> free_slices(gpu_count, width);
  for (auto i : order) {
    const auto p = instances[i].mig;
    int target = -1;
    const Footprint* target_fp = nullptr;
    for (int gi = 0; gi < gpu_count; ++gi) {
      // narrowest free footprint, lowest start on ties
      const Footprint* pick = nullptr;
      for (const auto& f : geometry.placements.at(p)) {
        bool free = true;
        for (int s = f.start; s < f.start + f.width && free; ++s) free = !busy[gi][s];
        if (free && (!pick || f.width < pick->width)) pick = &f;
      }
      if (!pick) continue;
      if (target < 0 || (choice == GpuChoice::most_free && free_slices[gi] > free_slices[target])) {
        target = gi;
        target_fp = pick;
      }
      if (choice == GpuChoice::first_fit) break;
    }
    if (target < 0) {
      plan.unplaced.push_back(i);
      continue;
    }
    for (int s = target_fp->start; s < target_fp->start + target_fp->width; ++s) busy[target][s] = true;
    free_slices[target] -= target_fp->width;
    plan.gpus[target].segments.push_back({i, p, target_fp->start, target_fp->width});
  }
  for (auto& g : plan.gpus)
    std::sort(g.segments.begin(), g.segments.end(),
              [](const auto& a, const auto& b) { return a.start < b.start; });
  std::sort(plan.unplaced.begin(), plan.unplaced.end());
  return plan;
}

}  // namespace

// First fit across GPUs; when that strands something, a second pass that
// spreads segments over the emptiest GPU gets a chance.
DeploymentPlan pack(std::span<const SegmentType> instances, int gpu_count, const MigGeometry& geometry) {
  if (gpu_count < 0) throw ConfigError("GPU count must be non-negative");
  geometry.validate();
  auto plan = pack_with(instances, gpu_count, geometry, GpuChoice::first_fit);
  if (plan.ok()) return plan;
  auto spread = pack_with(instances, gpu_count, geometry, GpuChoice::most_free);
  return spread.unplaced.size() < plan.unplaced.size() ? spread : plan;
}

int min_gpus(std::span<const SegmentType> instances, const MigGeometry& geometry) {
  geometry.validate();
  const int n = static_cast<int>(instances.size());
  for (int k = 0; k <= n; ++k)
    if (pack(instances, k, geometry).ok()) return k;
  throw ConfigError("instances cannot be placed on any number of GPUs");
}

int geometry_violations(const DeploymentPlan& plan, const MigGeometry& geometry) {
  int bad = 0;
  for (const auto& g : plan.gpus) {
    std::vector<int> use(geometry.slices_per_gpu, 0);
    for (const auto& s : g.segments) {
      const auto& allowed = geometry.placements.at(s.mig);
      if (std::find(allowed.begin(), allowed.end(), Footprint{s.start, s.width}) == allowed.end()) ++bad;
      for (int i = s.start; i < s.start + s.width; ++i) {
        if (i < 0 || i >= geometry.slices_per_gpu) {
          ++bad;
          continue;
        }
        if (++use[i] == 2) ++bad;
      }
    }
  }
  return bad;
}

std::string render(const DeploymentPlan& plan, const MigGeometry& geometry) {
  static constexpr std::string_view kMarks =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string out;
  for (const auto& g : plan.gpus) {
    std::string row(geometry.slices_per_gpu, '.');
    for (const auto& s : g.segments)
      for (int i = s.start; i < s.start + s.width; ++i) row[i] = kMarks[s.instance % kMarks.size()];
    out += row;
    out += '\n';
  }
  return out;
}

}  // namespace tessera
