#include "tessera/profiles.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace tessera {

std::string_view to_string(MigProfile p) {
  switch (p) {
    case MigProfile::g1: return "1g";
    case MigProfile::g1_me: return "1g_me";
    case MigProfile::g2: return "2g";
    case MigProfile::g3: return "3g";
    case MigProfile::g4: return "4g";
    case MigProfile::g7: return "7g";
  }
  return "?";
}

MigProfile parse_mig_profile(std::string_view s) {
  for (auto p : kMigProfiles)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown MIG profile '" + std::string(s) + "'");
}

int compute_slices(MigProfile p) {
  switch (p) {
    case MigProfile::g1:
    case MigProfile::g1_me: return 1;
    case MigProfile::g2: return 2;
    case MigProfile::g3: return 3;
    case MigProfile::g4: return 4;
    case MigProfile::g7: return 7;
  }
  return 0;
}

int memory_units(MigProfile p) {
  switch (p) {
    case MigProfile::g1: return 1;
    case MigProfile::g1_me:
    case MigProfile::g2: return 2;
    case MigProfile::g3:
    case MigProfile::g4: return 4;
    case MigProfile::g7: return 8;
  }
  return 0;
}

bool is_batch_size(int b) {
  return std::find(kBatchSizes.begin(), kBatchSizes.end(), b) != kBatchSizes.end();
}

std::string SegmentType::label() const {
  return std::string(to_string(mig)) + "/mps" + std::to_string(mps);
}

std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// ProfileTable

void ProfileTable::insert(const ProfileKey& key, const ProfileEntry& entry, int line) {
  if (key.task.empty() || key.variant.empty()) throw ValidationError("empty task or variant", line);
  if (key.segment.mps < 1 || key.segment.mps > kMaxMps)
    throw ValidationError("MPS concurrency must be in [1,4], got " + std::to_string(key.segment.mps),
                          line);
  if (!is_batch_size(key.batch))
    throw ValidationError("batch size " + std::to_string(key.batch) +
                              " is outside {1,2,4,8,16,32,64,128}",
                          line);
  if (!(entry.latency_ms > 0.0) || !std::isfinite(entry.latency_ms))
    throw ValidationError("latency must be positive", line);
  if (!(entry.throughput_rps > 0.0) || !std::isfinite(entry.throughput_rps))
    throw ValidationError("throughput must be positive", line);
  auto [it, inserted] = entries_.emplace(key, entry);
  if (!inserted)
    throw ValidationError("duplicate entry " + key.task + "/" + key.variant + "/" +
                              key.segment.label() + "/b" + std::to_string(key.batch),
                          line);
}

const ProfileEntry* ProfileTable::find(const ProfileKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void ProfileTable::check_batch_monotone() const {
  // Map order groups (task, variant, segment) together with batch ascending.
  const ProfileKey* prev_key = nullptr;
  double prev_latency = 0.0;
  for (const auto& [key, entry] : entries_) {
    if (prev_key && prev_key->task == key.task && prev_key->variant == key.variant &&
        prev_key->segment == key.segment && entry.latency_ms < prev_latency)
      throw ValidationError("latency decreases from batch " + std::to_string(prev_key->batch) +
                            " to " + std::to_string(key.batch) + " for " + key.task + "/" +
                            key.variant + "/" + key.segment.label());
    prev_key = &key;
    prev_latency = entry.latency_ms;
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view s, const char* name, int line) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError(std::string("bad ") + name + " '" + std::string(s) + "'", line);
  return value;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

ProfileTable parse_profile_csv(std::string_view text) {
  ProfileTable table;
  int line_no = 0;
  bool header_seen = false;
  std::map<ProfileKey, int> row_of;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = trim_cr(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kProfileCsvHeader)
        throw ValidationError("expected header '" + std::string(kProfileCsvHeader) + "'", line_no);
      header_seen = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 7) throw ValidationError("expected 7 fields", line_no);
    ProfileKey key;
    key.task = std::string(f[0]);
    key.variant = std::string(f[1]);
    try {
      key.segment.mig = parse_mig_profile(f[2]);
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), line_no);
    }
    key.segment.mps = parse_field<int>(f[3], "mps", line_no);
    key.batch = parse_field<int>(f[4], "batch", line_no);
    ProfileEntry entry{parse_field<double>(f[5], "latency_ms", line_no),
                       parse_field<double>(f[6], "throughput_rps", line_no)};
    table.insert(key, entry, line_no);
    row_of[key] = line_no;
  }
  if (!header_seen) throw ValidationError("empty profile file");
  try {
    table.check_batch_monotone();
  } catch (const ValidationError&) {
    // Re-run the scan to report the offending row.
    const ProfileKey* prev = nullptr;
    double prev_latency = 0.0;
    for (const auto& [key, entry] : table.entries()) {
      if (prev && prev->task == key.task && prev->variant == key.variant &&
          prev->segment == key.segment && entry.latency_ms < prev_latency)
        throw ValidationError("latency not monotone in batch size for " + key.task + "/" +
                                  key.variant + "/" + key.segment.label(),
                              row_of[key]);
      prev = &key;
      prev_latency = entry.latency_ms;
    }
    throw;
  }
  return table;
}

ProfileTable load_profile(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open profile file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_profile_csv(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

std::string dump_profile_csv(const ProfileTable& table) {
  std::string out(kProfileCsvHeader);
  out += '\n';
  for (const auto& [key, entry] : table.entries()) {
    out += key.task + ',' + key.variant + ',' + std::string(to_string(key.segment.mig)) + ',' +
           std::to_string(key.segment.mps) + ',' + std::to_string(key.batch) + ',' +
           format_number(entry.latency_ms) + ',' + format_number(entry.throughput_rps) + '\n';
  }
  return out;
}

void save_profile(const std::filesystem::path& file, const ProfileTable& table) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << dump_profile_csv(table);
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthKnobs::validate() const {
  if (!(gamma_s > 0.0 && gamma_s <= 1.0)) throw ConfigError("gamma_s must lie in (0, 1]");
  if (!(gamma_b >= 0.0 && gamma_b <= 1.0)) throw ConfigError("gamma_b must lie in [0, 1]");
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be >= 0");
  for (const auto& [task, vs] : variants)
    for (const auto& [variant, vk] : vs) {
      if (!(vk.base_latency_ms > 0.0))
        throw ConfigError("base latency of " + task + "/" + variant + " must be positive");
      if (!(vk.memory_units > 0.0))
        throw ConfigError("memory units of " + task + "/" + variant + " must be positive");
    }
}

SynthKnobs parse_knobs(std::string_view json_text) {
  using nlohmann::json;
  SynthKnobs k;
  try {
    auto doc = json::parse(json_text);
    k.gamma_b = doc.value("gamma_b", k.gamma_b);
    k.gamma_s = doc.value("gamma_s", k.gamma_s);
    k.delta = doc.value("delta", k.delta);
    k.jitter = doc.value("jitter", k.jitter);
    k.seed = doc.value("seed", k.seed);
    for (const auto& [task, vs] : doc.at("base_latency_ms").items())
      for (const auto& [variant, base] : vs.items())
        k.variants[task][variant].base_latency_ms = base.get<double>();
    if (doc.contains("memory_units"))
      for (const auto& [task, vs] : doc.at("memory_units").items())
        for (const auto& [variant, mem] : vs.items())
          k.variants[task][variant].memory_units = mem.get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("knob file: ") + e.what());
  }
  k.validate();
  return k;
}

SynthKnobs load_knobs(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open knob file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_knobs(ss.str());
}

std::string dump_knobs(const SynthKnobs& k) {
  nlohmann::ordered_json doc;
  doc["gamma_b"] = k.gamma_b;
  doc["gamma_s"] = k.gamma_s;
  doc["delta"] = k.delta;
  doc["jitter"] = k.jitter;
  doc["seed"] = k.seed;
  for (const auto& [task, vs] : k.variants)
    for (const auto& [variant, vk] : vs) {
      doc["base_latency_ms"][task][variant] = vk.base_latency_ms;
      doc["memory_units"][task][variant] = vk.memory_units;
    }
  return doc.dump(2) + "\n";
}

ProfileTable synth_profile(const AppSpec& app, const SynthKnobs& knobs) {
  knobs.validate();
  std::mt19937_64 rng(knobs.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProfileTable table;
  for (const auto& task : app.graph.tasks) {
    auto tk = knobs.variants.find(task.id);
    for (const auto& variant : task.variants) {
      if (tk == knobs.variants.end() || !tk->second.contains(variant.id))
        throw ConfigError("no base latency for " + task.id + "/" + variant.id);
      const VariantKnobs& vk = tk->second.at(variant.id);
      for (auto mig : kMigProfiles) {
        for (int mps = 1; mps <= kMaxMps; ++mps) {
          // One draw per (task, variant, segment) even for skipped segments so
          // the stream does not depend on memory knobs.
          const double noise = std::exp(knobs.jitter * normal(rng));
          if (mps * vk.memory_units > memory_units(mig)) continue;
          const double eff = std::pow(static_cast<double>(compute_slices(mig)), knobs.gamma_s);
          const double sharing = 1.0 + knobs.delta * (mps - 1);
          for (int b : kBatchSizes) {
            const double latency =
                vk.base_latency_ms * std::pow(static_cast<double>(b), knobs.gamma_b) / eff *
                sharing * noise;
            const double throughput = mps * b * 1000.0 / latency;
            table.insert({task.id, variant.id, {mig, mps}, b}, {latency, throughput});
          }
        }
      }
    }
  }
  return table;
}

double best_latency(const ProfileTable& table, const std::string& task) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [key, entry] : table.entries())
    if (key.task == task && key.batch == 1) best = std::min(best, entry.latency_ms);
  if (!std::isfinite(best)) throw ConfigError("no batch-1 profile entry for task '" + task + "'");
  return best;
}

RefineResult refine(const ProfileTable& table, const Observation& obs, double weight) {
  const ProfileEntry* old = table.find(obs.key);
  if (!old)
    throw ConfigError("no profile entry " + obs.key.task + "/" + obs.key.variant + "/" +
                      obs.key.segment.label() + "/b" + std::to_string(obs.key.batch));
  if (!(weight > 0.0 && weight <= 1.0)) throw ConfigError("refine weight must lie in (0, 1]");
  if (!(obs.latency_ms > 0.0) || !(obs.throughput_rps > 0.0))
    throw ConfigError("observations must be positive");

  ProfileEntry updated{(1.0 - weight) * old->latency_ms + weight * obs.latency_ms,
                       (1.0 - weight) * old->throughput_rps + weight * obs.throughput_rps};

  // Neighbouring batches of the same (task, variant, segment) bound the new latency.
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  for (const auto& [key, entry] : table.entries()) {
    if (key.task != obs.key.task || key.variant != obs.key.variant ||
        key.segment != obs.key.segment)
      continue;
    if (key.batch < obs.key.batch) lower = std::max(lower, entry.latency_ms);
    if (key.batch > obs.key.batch) upper = std::min(upper, entry.latency_ms);
  }
  RefineResult result;
  const double clamped = std::clamp(updated.latency_ms, lower, upper);
  result.clamped = clamped != updated.latency_ms;
  updated.latency_ms = clamped;

  ProfileTable next;
  for (const auto& [key, entry] : table.entries())
    next.insert(key, key == obs.key ? updated : entry);
  result.table = std::move(next);
  return result;
}

}  // namespace tessera
