#include "sctc/model.hpp"

#include <cmath>
#include <random>

#include "sctc/error.hpp"
#include "sctc/io.hpp"

namespace sctc {

using nlohmann::json;

namespace {

// Each module draws its initial weights from its own stream, so toggling one
// module never changes another module's initialization.
std::mt19937_64 module_rng(std::uint64_t seed, std::uint32_t module) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    module, 0x5c7cu};
  return std::mt19937_64(seq);
}

Tensor action_labels(std::span<const PairCandidate> pairs, std::span<const std::size_t> selected,
                     std::size_t num_actions) {
  Tensor y({selected.size(), num_actions});
  for (std::size_t k = 0; k < selected.size(); ++k)
    for (int a : pairs[selected[k]].gt_actions) y[k * num_actions + static_cast<std::size_t>(a)] = 1.0;
  return y;
}

}  // namespace

void ModelConfig::adapt_to(const HoiVocabulary& vocab, const Scene& sample) {
  appearance_dim = sample.appearance_dim;
  map_dim = sample.feature_map.rank() == 3 ? sample.feature_map.extent(2) : 0;
  num_objects = static_cast<std::size_t>(vocab.num_objects);
  num_actions = static_cast<std::size_t>(vocab.num_actions);
  interaction_dim = vocab.embedding_dim();
}

std::string ModelConfig::arm_name() const {
  std::string s = use_kd ? "KD" : "";
  auto add = [&](const char* part) {
    if (!s.empty()) s += "+";
    s += part;
  };
  if (use_sta) add("STA");
  if (use_ctd) add("CTD");
  if (!use_sta) add("MLP");
  return s;
}

json to_json(const ModelConfig& c) {
  return {{"appearance_dim", c.appearance_dim},
          {"map_dim", c.map_dim},
          {"num_objects", c.num_objects},
          {"num_actions", c.num_actions},
          {"interaction_dim", c.interaction_dim},
          {"semantic_dim", c.semantic_dim},
          {"max_proposals", c.max_proposals},
          {"decoder",
           {{"model", c.decoder.model},
            {"heads", c.decoder.heads},
            {"feed_forward", c.decoder.feed_forward},
            {"layers", c.decoder.layers}}},
          {"ctd",
           {{"instance_embed", c.ctd.instance_embed},
            {"semantic_embed", c.ctd.semantic_embed},
            {"layout_embed", c.ctd.layout_embed},
            {"fusion_hidden", c.ctd.fusion_hidden}}},
          {"use_kd", c.use_kd},
          {"use_sta", c.use_sta},
          {"use_ctd", c.use_ctd},
          {"edge", to_string(c.edge)},
          {"relations", to_string(c.relations)},
          {"adjacency_norm", to_string(c.adjacency_norm)},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"focal_gamma", c.focal_gamma},
          {"focal_alpha", c.focal_alpha},
          {"pair_loss_selected_only", c.pair_loss_selected_only},
          {"score_with_interactiveness", c.score_with_interactiveness},
          {"kd_negatives_all_rows", c.kd_negatives_all_rows},
          {"hard_negative_ratio", c.hard_negative_ratio},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.appearance_dim = j.at("appearance_dim");
    c.map_dim = j.at("map_dim");
    c.num_objects = j.at("num_objects");
    c.num_actions = j.at("num_actions");
    c.interaction_dim = j.at("interaction_dim");
    c.semantic_dim = j.at("semantic_dim");
    c.max_proposals = j.at("max_proposals");
    const json& d = j.at("decoder");
    c.decoder = {d.at("model"), d.at("heads"), d.at("feed_forward"), d.at("layers")};
    const json& t = j.at("ctd");
    c.ctd = {t.at("instance_embed"), t.at("semantic_embed"), t.at("layout_embed"),
             t.at("fusion_hidden")};
    c.use_kd = j.at("use_kd");
    c.use_sta = j.at("use_sta");
    c.use_ctd = j.at("use_ctd");
    c.edge = parse_edge_content(j.at("edge"));
    c.relations = parse_relation_toggles(j.at("relations"));
    c.adjacency_norm = parse_adjacency_norm(j.at("adjacency_norm"));
    c.alpha = j.at("alpha");
    c.beta = j.at("beta");
    c.gamma = j.at("gamma");
    c.focal_gamma = j.at("focal_gamma");
    c.focal_alpha = j.at("focal_alpha");
    c.pair_loss_selected_only = j.at("pair_loss_selected_only");
    c.score_with_interactiveness = j.at("score_with_interactiveness");
    c.kd_negatives_all_rows = j.at("kd_negatives_all_rows");
    c.hard_negative_ratio = j.at("hard_negative_ratio");
    c.init_seed = j.at("init_seed");
    return c;
  } catch (const json::exception& e) {
    throw LoadError(std::string("bad model config: ") + e.what());
  }
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  const ModelConfig& c = config_;
  if (c.max_proposals == 0) throw ConfigError("K must be at least 1");
  const std::size_t inst = c.appearance_dim + c.semantic_dim;
  const std::size_t node = c.interaction_dim;
  auto rng = module_rng(c.init_seed, 1);
  interaction_ = make_interaction_params(store_, c.num_objects, c.appearance_dim, c.semantic_dim,
                                         c.interaction_dim, rng);
  // Without distillation F only reaches the losses through an F-based edge.
  // Otherwise its projection would never see a gradient, so it is frozen.
  if (!c.use_kd && (c.edge == EdgeContent::kSpatial || c.edge == EdgeContent::kLearnable)) {
    for (const Linear& l : interaction_.projection.layers) {
      l.weight->trainable = false;
      l.bias->trainable = false;
    }
  }
  rng = module_rng(c.init_seed, 2);
  sta_ = make_sta_params(store_, c.edge, inst, c.interaction_dim, node, c.use_sta, rng);
  rng = module_rng(c.init_seed, 3);
  head_ = make_interactiveness_head(store_, node, rng);
  if (c.use_ctd) {
    rng = module_rng(c.init_seed, 4);
    ctd_ = make_ctd_params(store_, c.relations, c.adjacency_norm, c.num_objects, c.max_proposals,
                           c.ctd, rng);
  }
  rng = module_rng(c.init_seed, 5);
  decoder_ = make_decoder_params(store_, c.decoder, 2 * node, c.map_dim, c.num_actions, rng);
}

void Model::check_compatible(const HoiVocabulary& vocab, const Scene& sample) const {
  ModelConfig expected = config_;
  expected.adapt_to(vocab, sample);
  auto mismatch = [](const char* what, std::size_t have, std::size_t want) {
    throw LoadError(std::string("checkpoint/data mismatch in ") + what + ": model has " +
                    std::to_string(have) + ", data has " + std::to_string(want));
  };
  if (expected.appearance_dim != config_.appearance_dim)
    mismatch("appearance_dim", config_.appearance_dim, expected.appearance_dim);
  if (expected.map_dim != config_.map_dim) mismatch("map_dim", config_.map_dim, expected.map_dim);
  if (expected.num_objects != config_.num_objects)
    mismatch("num_objects", config_.num_objects, expected.num_objects);
  if (expected.num_actions != config_.num_actions)
    mismatch("num_actions", config_.num_actions, expected.num_actions);
  if (expected.interaction_dim != config_.interaction_dim)
    mismatch("interaction_dim", config_.interaction_dim, expected.interaction_dim);
}

SceneOutput Model::forward(Tape& tape, const Scene& scene, const HoiVocabulary& vocab,
                           std::vector<PairCandidate> pairs, bool with_losses,
                           AttentionTrace* trace) const {
  SceneOutput out;
  if (pairs.empty()) return out;
  const ModelConfig& c = config_;

  PairBatch batch = build_pairs(tape, scene, std::move(pairs), interaction_);

  const TripletGraphState graph =
      c.use_sta ? sta_forward(tape, batch.human_features, batch.object_features, batch.interaction,
                              batch.spatial, sta_)
                : mlp_fusion_forward(tape, batch.human_features, batch.object_features,
                                     batch.interaction, batch.spatial, sta_);
  const Var scores = interactiveness(tape, graph.nu_hoi, head_);
  out.pair_scores.assign(scores.value().data().begin(), scores.value().data().end());
  out.selected = select_topk(out.pair_scores, c.max_proposals);

  for (std::size_t idx : out.selected) {
    const PairCandidate& p = batch.pairs[idx];
    const Detection& h = scene.detections[p.human];
    const Detection& o = scene.detections[p.object];
    out.proposals.push_back({idx, p.human, p.object, o.category, h.box, o.box, h.score, o.score,
                             out.pair_scores[idx]});
  }

  Var nodes = gather_rows(graph.nu_hoi, out.selected);
  if (c.use_ctd) {
    const RelationTensors rel =
        build_relations(out.proposals, c.num_objects, scene.width, scene.height);
    nodes = ctd_update(nodes, fuse_adjacency(tape, rel, ctd_));
  }
  const Var decoded = decode(tape, nodes, scene.feature_map, decoder_, trace);
  const Var probs = action_probabilities(tape, decoded, decoder_);
  out.action_probs = probs.value();

  if (with_losses) {
    if (c.use_kd) {
      const auto targets =
          build_targets(batch.pairs, scene, vocab, KdOptions{c.kd_negatives_all_rows});
      out.kd_loss = kd_loss(batch.interaction, stack_targets(targets));
    } else {
      out.kd_loss = tape.constant(Tensor::scalar(0.0));
    }
    std::vector<std::size_t> scored = out.selected;
    if (!c.pair_loss_selected_only) {
      scored.resize(batch.pairs.size());
      for (std::size_t i = 0; i < scored.size(); ++i) scored[i] = i;
    }
    Tensor pair_labels({scored.size()});
    for (std::size_t k = 0; k < scored.size(); ++k) pair_labels[k] = batch.pairs[scored[k]].gt_label;
    out.pair_loss =
        pair_loss(gather_rows(scores, scored), pair_labels, c.focal_gamma, c.focal_alpha);
    out.action_loss = action_loss(probs, action_labels(batch.pairs, out.selected, c.num_actions),
                                  c.focal_gamma, c.focal_alpha);
    out.total = total_loss(*out.kd_loss, *out.pair_loss, *out.action_loss, c.alpha, c.beta, c.gamma);
    out.values = {out.kd_loss->value().item(), out.pair_loss->value().item(),
                  out.action_loss->value().item(), out.total->value().item()};
  }
  out.pairs = std::move(batch.pairs);
  return out;
}

std::vector<double> Model::score_pairs(const Scene& scene,
                                       std::span<const PairCandidate> pairs) const {
  if (pairs.empty()) return {};
  Tape tape;
  PairBatch batch =
      build_pairs(tape, scene, std::vector<PairCandidate>(pairs.begin(), pairs.end()), interaction_);
  const TripletGraphState graph =
      config_.use_sta ? sta_forward(tape, batch.human_features, batch.object_features,
                                    batch.interaction, batch.spatial, sta_)
                      : mlp_fusion_forward(tape, batch.human_features, batch.object_features,
                                           batch.interaction, batch.spatial, sta_);
  const Var scores = interactiveness(tape, graph.nu_hoi, head_);
  return {scores.value().data().begin(), scores.value().data().end()};
}

std::vector<HoiPrediction> Model::predict(const Scene& scene, const HoiVocabulary& vocab) const {
  Tape tape;
  const SceneOutput out = forward(tape, scene, vocab, enumerate_pairs(scene), false);
  if (out.empty()) return {};
  return compose_predictions(out.proposals, out.action_probs, vocab,
                             config_.score_with_interactiveness);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string encode_checkpoint(const Model& model) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : model.params()) tensors.emplace_back(p->name, p->value);
  json meta = {{"format", "sctc-checkpoint"}, {"version", 1}, {"config", to_json(model.config())}};
  return encode_container(std::move(meta), tensors, DType::kF64);
}

Model decode_checkpoint(std::span<const char> bytes) {
  const Container c = decode_container(bytes);
  if (!c.meta.contains("format") || c.meta["format"] != "sctc-checkpoint") {
    throw LoadError("not a checkpoint file");
  }
  Model model(model_config_from_json(c.meta.at("config")));
  if (c.tensors.size() != model.params().size()) {
    throw LoadError("checkpoint holds " + std::to_string(c.tensors.size()) +
                    " tensors, config expects " + std::to_string(model.params().size()));
  }
  for (const auto& [name, t] : c.tensors) {
    Parameter* p = model.params().find(name);
    if (!p) throw LoadError("checkpoint tensor '" + name + "' is not a model parameter");
    if (p->value.shape() != t.shape()) {
      throw LoadError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape()) +
                      ", model expects " + shape_str(p->value.shape()));
    }
    p->value = t;
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_checkpoint(bytes);
}

}  // namespace sctc
