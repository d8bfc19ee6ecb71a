#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sctc/autodiff.hpp"
#include "sctc/ctd.hpp"
#include "sctc/decoder.hpp"
#include "sctc/distill.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/interaction.hpp"
#include "sctc/sta.hpp"

namespace sctc {

struct ModelConfig {
  // Data-dependent widths; see ModelConfig::for_data.
  std::size_t appearance_dim = 32;
  std::size_t map_dim = 64;
  std::size_t num_objects = 6;
  std::size_t num_actions = 5;
  std::size_t interaction_dim = 64;  // d_F == text embedding width == d_node
  std::size_t semantic_dim = 16;

  std::size_t max_proposals = 32;  // K
  DecoderDims decoder;
  CtdDims ctd;

  bool use_kd = true;
  bool use_sta = true;  // false: MLP fusion of [nu_h; nu_o; edge]
  bool use_ctd = true;
  EdgeContent edge = EdgeContent::kInteractionSpatial;
  RelationToggles relations;
  AdjacencyNorm adjacency_norm = AdjacencyNorm::kSoftmax;

  double alpha = 1.0;  // L_kd
  double beta = 1.0;   // L_pair
  double gamma = 1.0;  // L_a
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  bool pair_loss_selected_only = true;
  bool score_with_interactiveness = true;
  bool kd_negatives_all_rows = true;
  double hard_negative_ratio = 3.0;

  std::uint64_t init_seed = 0;

  // Fills the data-dependent widths from a vocabulary and a sample scene.
  void adapt_to(const HoiVocabulary& vocab, const Scene& sample);
  std::string arm_name() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct LossValues {
  double kd = 0;
  double pair = 0;
  double action = 0;
  double total = 0;
};

struct SceneOutput {
  std::vector<PairCandidate> pairs;  // pairs that went through the model
  std::vector<double> pair_scores;   // p_hat per processed pair
  std::vector<std::size_t> selected;  // top-K indices into `pairs`
  std::vector<Proposal> proposals;
  Tensor action_probs;  // [K', C_a]
  std::optional<Var> kd_loss;
  std::optional<Var> pair_loss;
  std::optional<Var> action_loss;
  std::optional<Var> total;
  LossValues values;

  bool empty() const { return pairs.empty(); }
};

class Model {
 public:
  explicit Model(ModelConfig config);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Runs the whole head on `pairs` (normally enumerate_pairs or a training
  // subset). Losses are recorded only when `with_losses` is set.
  SceneOutput forward(Tape& tape, const Scene& scene, const HoiVocabulary& vocab,
                      std::vector<PairCandidate> pairs, bool with_losses,
                      AttentionTrace* trace = nullptr) const;

  // Interactiveness of every pair under the current parameters.
  std::vector<double> score_pairs(const Scene& scene, std::span<const PairCandidate> pairs) const;

  // Inference on all candidate pairs.
  std::vector<HoiPrediction> predict(const Scene& scene, const HoiVocabulary& vocab) const;

  // Throws LoadError when the data widths disagree with the config.
  void check_compatible(const HoiVocabulary& vocab, const Scene& sample) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  const InteractionParams& interaction_params() const { return interaction_; }
  const StaParams& sta_params() const { return sta_; }
  const Mlp& interactiveness_head() const { return head_; }
  const CtdParams& ctd_params() const { return ctd_; }
  const DecoderParams& decoder_params() const { return decoder_; }

 private:
  ModelConfig config_;
  ParameterStore store_;
  InteractionParams interaction_;
  StaParams sta_;
  Mlp head_;
  CtdParams ctd_;
  DecoderParams decoder_;
};

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace sctc
