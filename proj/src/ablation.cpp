#include "sctc/ablation.hpp"

#include <cstdio>
#include <sstream>

#include "sctc/error.hpp"

namespace sctc {

namespace {

void set_modules(ModelConfig& c, bool kd, bool sta, bool ctd) {
  c.use_kd = kd;
  c.use_sta = sta;
  c.use_ctd = ctd;
}

std::string format_mean(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::vector<AblationArm> ablation_arms(const std::string& table) {
  if (table == "main") {
    // Without STA the per-pair fusion falls back to the MLP, so the KD+CTD
    // arm also runs on MLP-fused features.
    return {
        {"MLP", [](ModelConfig& c) { set_modules(c, false, false, false); }},
        {"KD+MLP", [](ModelConfig& c) { set_modules(c, true, false, false); }},
        {"KD+STA", [](ModelConfig& c) { set_modules(c, true, true, false); }},
        {"KD+CTD", [](ModelConfig& c) { set_modules(c, true, false, true); }},
        {"KD+STA+CTD", [](ModelConfig& c) { set_modules(c, true, true, true); }},
    };
  }
  if (table == "edge") {
    auto edge = [](EdgeContent e) { return [e](ModelConfig& c) { c.edge = e; }; };
    return {{"LE", edge(EdgeContent::kLearnable)},
            {"SF", edge(EdgeContent::kSpatial)},
            {"IF", edge(EdgeContent::kInteraction)},
            {"IF+SF", edge(EdgeContent::kInteractionSpatial)}};
  }
  if (table == "relation") {
    auto rel = [](const char* spec) {
      const RelationToggles t = parse_relation_toggles(spec);
      return [t](ModelConfig& c) { c.relations = t; };
    };
    return {{"LE", rel("LE")},
            {"IR", rel("IR")},
            {"SR", rel("SR")},
            {"LR", rel("LR")},
            {"IR+SR+LR", rel("IR,SR,LR")}};
  }
  throw ConfigError("unknown ablation table '" + table + "' (expected main, edge or relation)");
}

std::vector<AblationRow> run_ablation(const std::vector<AblationArm>& arms, const Dataset& data,
                                      const ModelConfig& base, const TrainOptions& train,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t threads) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const AblationArm& arm : arms) {
    AblationRow row{arm.name};
    double sums[3] = {0, 0, 0};
    std::size_t counts[3] = {0, 0, 0};
    for (std::uint64_t seed : seeds) {
      ModelConfig cfg = base;
      arm.apply(cfg);
      cfg.init_seed = seed;
      TrainOptions opts = train;
      opts.seed = seed;
      Model model(cfg);
      train_model(model, data.train, data.vocab, opts);
      const MapReport r = evaluate_model(model, data.test, data.vocab, threads);
      const std::optional<double>* parts[3] = {&r.full, &r.rare, &r.non_rare};
      for (int i = 0; i < 3; ++i) {
        if (*parts[i]) {
          sums[i] += **parts[i];
          ++counts[i];
        }
      }
    }
    std::optional<double>* out[3] = {&row.full, &row.rare, &row.non_rare};
    for (int i = 0; i < 3; ++i)
      if (counts[i]) *out[i] = sums[i] / static_cast<double>(counts[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "arm,full,rare,non_rare\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << format_mean(r.full) << ',' << format_mean(r.rare) << ','
        << format_mean(r.non_rare) << '\n';
  }
  return out.str();
}

}  // namespace sctc
