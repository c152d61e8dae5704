#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tessera/model.hpp"

namespace tessera {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double number_or(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

Path parse_path(const TaskGraph& g, const json& j) {
  Path p;
  for (const auto& id : j) p.push_back(g.index_of(id.get<std::string>()));
  return p;
}

}  // namespace

AppSpec parse_app(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("application file: ") + e.what());
  }
  AppSpec app;
  try {
    app.name = doc.value("name", "app");
    for (const auto& jt : doc.at("tasks")) {
      Task task;
      task.id = jt.at("id").get<std::string>();
      for (const auto& jv : jt.at("variants"))
        task.variants.push_back({jv.at("id").get<std::string>(), jv.at("accuracy").get<double>()});
      app.graph.tasks.push_back(std::move(task));
    }
    for (const auto& je : doc.value("edges", json::array())) {
      Edge e;
      e.src = app.graph.index_of(je.at("src").get<std::string>());
      e.dst = app.graph.index_of(je.at("dst").get<std::string>());
      const auto& variants = app.graph.tasks[e.src].variants;
      const auto& jf = je.at("factor");
      if (jf.is_number()) {
        e.factor.assign(variants.size(), jf.get<double>());
      } else {
        for (const auto& v : variants) {
          if (!jf.contains(v.id))
            throw ConfigError("edge " + app.graph.tasks[e.src].id + " -> " +
                              app.graph.tasks[e.dst].id + " has no factor for variant '" + v.id +
                              "'");
          e.factor.push_back(jf.at(v.id).get<double>());
        }
      }
      app.graph.edges.push_back(std::move(e));
    }
    app.graph.validate();
    app.paths = enumerate_paths(app.graph);

    const json fractions = doc.value("path_fractions", json());
    if (fractions.is_null()) {
      if (app.paths.size() != 1)
        throw ConfigError("path_fractions is required when the graph has several paths");
      app.path_fractions = {1.0};
    } else if (doc.contains("paths")) {
      // Fractions follow the order of the listed paths; map them onto the
      // canonical enumeration order.
      const auto& listed = doc.at("paths");
      if (listed.size() != app.paths.size() || fractions.size() != listed.size())
        throw ConfigError("'paths' must list every entry-to-sink path exactly once");
      app.path_fractions.assign(app.paths.size(), 0.0);
      std::vector<bool> seen(app.paths.size(), false);
      for (std::size_t i = 0; i < listed.size(); ++i) {
        Path p = parse_path(app.graph, listed[i]);
        auto it = std::find(app.paths.begin(), app.paths.end(), p);
        if (it == app.paths.end()) throw ConfigError("listed path is not an entry-to-sink path");
        auto k = static_cast<std::size_t>(it - app.paths.begin());
        if (seen[k]) throw ConfigError("path listed twice");
        seen[k] = true;
        app.path_fractions[k] = fractions[i].get<double>();
      }
    } else {
      if (fractions.size() != app.paths.size())
        throw ConfigError("expected " + std::to_string(app.paths.size()) + " path fractions");
      for (const auto& f : fractions) app.path_fractions.push_back(f.get<double>());
    }

    const json slo = doc.at("slo");
    app.slo_latency_ms = slo.at("latency_ms").get<double>();
    app.slo_accuracy = slo.at("accuracy_frac").get<double>();
    const json objective = doc.value("objective", json::object());
    app.alpha = number_or(objective, "alpha", 1.0);
    app.beta = number_or(objective, "beta", 0.0);
    app.staleness_ms = number_or(doc, "staleness_ms", 0.0);
    app.hop_latency_ms = number_or(doc, "hop_latency_ms", 0.0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("application file: ") + e.what());
  }
  app.validate();
  return app;
}

AppSpec load_app(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open application file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_app(ss.str());
  } catch (const StructuralError& e) {
    throw StructuralError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

std::string dump_app(const AppSpec& app) {
  const auto& g = app.graph;
  ordered_json doc;
  doc["name"] = app.name;
  doc["tasks"] = ordered_json::array();
  for (const auto& t : g.tasks) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["variants"] = ordered_json::array();
    for (const auto& v : t.variants) jt["variants"].push_back({{"id", v.id}, {"accuracy", v.accuracy}});
    doc["tasks"].push_back(jt);
  }
  doc["edges"] = ordered_json::array();
  for (const auto& e : g.edges) {
    ordered_json factor;
    for (std::size_t v = 0; v < e.factor.size(); ++v)
      factor[g.tasks[e.src].variants[v].id] = e.factor[v];
    doc["edges"].push_back({{"src", g.tasks[e.src].id}, {"dst", g.tasks[e.dst].id}, {"factor", factor}});
  }
  doc["paths"] = ordered_json::array();
  for (const auto& p : app.paths) {
    ordered_json jp = ordered_json::array();
    for (auto t : p) jp.push_back(g.tasks[t].id);
    doc["paths"].push_back(jp);
  }
  doc["path_fractions"] = app.path_fractions;
  doc["slo"] = {{"latency_ms", app.slo_latency_ms}, {"accuracy_frac", app.slo_accuracy}};
  doc["objective"] = {{"alpha", app.alpha}, {"beta", app.beta}};
  doc["staleness_ms"] = app.staleness_ms;
  doc["hop_latency_ms"] = app.hop_latency_ms;
  return doc.dump(2) + "\n";
}

}  // namespace tessera
