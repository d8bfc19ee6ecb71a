#include "sctc/ctd.hpp"

#include <sstream>

#include "sctc/error.hpp"

namespace sctc {

Tensor instance_relation(std::span<const Proposal> p) {
  const std::size_t k = p.size();
  Tensor m({k, k, 2});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      m[(i * k + j) * 2 + 0] = p[i].human == p[j].human ? 1.0 : 0.0;
      m[(i * k + j) * 2 + 1] = p[i].object == p[j].object ? 1.0 : 0.0;
    }
  }
  return m;
}

Tensor semantic_relation(std::span<const Proposal> p, std::size_t num_objects) {
  const std::size_t k = p.size();
  Tensor m({k, k, num_objects});
  for (const auto& q : p) {
    if (q.object_category < 0 || static_cast<std::size_t>(q.object_category) >= num_objects) {
      throw DimensionError("semantic_relation: object category out of range");
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (p[i].object_category == p[j].object_category) {
        m[(i * k + j) * num_objects + static_cast<std::size_t>(p[i].object_category)] = 1.0;
      }
    }
  }
  return m;
}

Tensor layout_relation(std::span<const Proposal> p, double image_w, double image_h) {
  const std::size_t k = p.size();
  constexpr std::size_t d = SpatialFeature::kDim;
  std::vector<Box> unions;
  for (const auto& q : p) unions.push_back(union_box(q.human_box, q.object_box));
  Tensor m({k, k, d});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const SpatialFeature f = spatial_feature(unions[i], unions[j], image_w, image_h);
      std::copy(f.values.begin(), f.values.end(), m.data().begin() + (i * k + j) * d);
    }
  }
  return m;
}

RelationTensors build_relations(std::span<const Proposal> proposals, std::size_t num_objects,
                                double image_w, double image_h) {
  return {instance_relation(proposals), semantic_relation(proposals, num_objects),
          layout_relation(proposals, image_w, image_h)};
}

AdjacencyNorm parse_adjacency_norm(const std::string& s) {
  if (s == "softmax") return AdjacencyNorm::kSoftmax;
  if (s == "sigmoid") return AdjacencyNorm::kSigmoid;
  if (s == "raw") return AdjacencyNorm::kRaw;
  throw ConfigError("unknown adjacency normalization '" + s + "' (softmax, sigmoid, raw)");
}

std::string to_string(AdjacencyNorm n) {
  switch (n) {
    case AdjacencyNorm::kSoftmax: return "softmax";
    case AdjacencyNorm::kSigmoid: return "sigmoid";
    case AdjacencyNorm::kRaw: return "raw";
  }
  return "?";
}

RelationToggles parse_relation_toggles(const std::string& s) {
  RelationToggles t{false, false, false, false};
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "IR") t.instance = true;
    else if (item == "SR") t.semantic = true;
    else if (item == "LR") t.layout = true;
    else if (item == "LE") t.learned = true;
    else if (!item.empty()) throw ConfigError("unknown relation '" + item + "' (IR, SR, LR, LE)");
  }
  if (t.learned && (t.instance || t.semantic || t.layout)) {
    throw ConfigError("learned adjacency (LE) replaces IR/SR/LR; do not combine them");
  }
  if (!t.learned && !t.instance && !t.semantic && !t.layout) {
    throw ConfigError("at least one relation must be enabled");
  }
  return t;
}

std::string to_string(const RelationToggles& t) {
  if (t.learned) return "LE";
  std::string s;
  for (auto [on, name] : {std::pair{t.instance, "IR"}, {t.semantic, "SR"}, {t.layout, "LR"}}) {
    if (!on) continue;
    if (!s.empty()) s += ",";
    s += name;
  }
  return s;
}

CtdParams make_ctd_params(ParameterStore& store, RelationToggles toggles, AdjacencyNorm norm,
                          std::size_t num_objects, std::size_t max_proposals, const CtdDims& dims,
                          std::mt19937_64& rng) {
  CtdParams p;
  p.toggles = toggles;
  p.norm = norm;
  if (toggles.learned) {
    p.learned_logits =
        &store.add("ctd.learned_logits", {max_proposals, max_proposals}, Init::kNormal, rng, 0.1);
    return p;
  }
  std::size_t width = 0;
  if (toggles.instance) {
    p.embed_instance = Linear::create(store, "ctd.embed_instance", 2, dims.instance_embed, rng);
    width += dims.instance_embed;
  }
  if (toggles.semantic) {
    p.embed_semantic =
        Linear::create(store, "ctd.embed_semantic", num_objects, dims.semantic_embed, rng);
    width += dims.semantic_embed;
  }
  if (toggles.layout) {
    p.embed_layout =
        Linear::create(store, "ctd.embed_layout", SpatialFeature::kDim, dims.layout_embed, rng);
    width += dims.layout_embed;
  }
  p.fusion = Mlp::create(store, "ctd.fusion", {width, dims.fusion_hidden, 1}, rng);
  return p;
}

Var fuse_adjacency(Tape& tape, const RelationTensors& rel, const CtdParams& params) {
  const std::size_t k = rel.instance.rank() == 3 ? rel.instance.extent(0) : 0;
  if (k == 0) throw DimensionError("fuse_adjacency: no proposals");
  Var logits;
  if (params.toggles.learned) {
    const std::size_t kmax = params.learned_logits->value.extent(0);
    if (k > kmax) throw DimensionError("fuse_adjacency: more proposals than learned adjacency size");
    logits = slice(tape.param(*params.learned_logits), 0, k, 0, k);
  } else {
    std::vector<Var> parts;
    auto embed = [&](const Tensor& m, const Linear& layer) {
      const Tensor flat = m.reshaped({k * k, m.extent(2)});
      parts.push_back(linear(tape, tape.constant(flat), layer));
    };
    if (params.toggles.instance) embed(rel.instance, params.embed_instance);
    if (params.toggles.semantic) embed(rel.semantic, params.embed_semantic);
    if (params.toggles.layout) embed(rel.layout, params.embed_layout);
    logits = reshape(mlp(tape, concat(parts), params.fusion), {k, k});
  }
  switch (params.norm) {
    case AdjacencyNorm::kSoftmax: return softmax(logits);
    case AdjacencyNorm::kSigmoid: return sigmoid(logits);
    case AdjacencyNorm::kRaw: return logits;
  }
  return logits;
}

Var ctd_update(Var nu_hoi, Var adjacency) { return add(matmul(adjacency, nu_hoi), nu_hoi); }

}  // namespace sctc
