#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mse2d/encoder.hpp"
#include "mse2d/graph.hpp"
#include "mse2d/rng.hpp"

namespace mse2d {

enum class ObjectiveKind { kFull, kMse, kV1, kV2 };

const char* objective_kind_name(ObjectiveKind k);
ObjectiveKind objective_kind_from_name(const std::string& name);

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kFull;
  std::vector<int> dims;       // ascending Matryoshka dimension set (mse, v1, v2 +dims)
  int target_dim = 128;        // v2 single-target dimension
  double lambda = 1.0;         // v1 KLD weight
  double alpha = 1.0;          // v2 layer-loss weight
  double beta = 1.0;           // v2 dim-loss weight
  double temperature = 0.05;   // similarity softmax temperature
  bool score = false;          // v2: replace MSE+KLD dim loss with score alignment
  bool full_dim = false;       // v2: add full-dimension loss from every layer
  bool fix_doc = false;        // v2: documents always from the full model output
  bool plus_dims = false;      // v2: train the whole dimension set, not just target_dim
  bool swap_kld_teacher = false;  // flip which side of each KLD is gradient-blocked
  uint64_t seed = 0;

  void validate(int d_model) const;
  std::string label() const;

  // Dimension set a v2 loss iterates over.
  std::vector<int> v2_dim_set() const;
};

// Freezes gradient-blocked teacher quantities so finite differences and the
// analytic backward pass see the same function. Live mode (training) is a
// plain stop-gradient.
template <class S>
struct TeacherContext {
  enum class Mode { kLive, kCapture, kReplay };
  Mode mode = Mode::kLive;
  std::vector<Tensor<S>> captured;
  size_t cursor = 0;
  int sublayer = 0;  // v1 sampled sub-layer, fixed across replays

  ad::Var<S> block(const ad::Var<S>& v);
  void start_replay() {
    mode = Mode::kReplay;
    cursor = 0;
  }
};

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// In-batch InfoNCE: cross-entropy over cosine similarities at temperature
// tau, the aligned document being the positive class.
template <class S>
ad::Var<S> info_nce(const ad::Var<S>& query_embs, const ad::Var<S>& doc_embs, double tau);

// Row-stochastic softmax of the query x doc cosine similarity matrix.
template <class S>
ad::Var<S> sim_distribution(const ad::Var<S>& query_embs, const ad::Var<S>& doc_embs, double tau);

// Mean over rows of sum p * ln(p/q).
template <class S>
ad::Var<S> kld(const ad::Var<S>& p, const ad::Var<S>& q);

// Sum of InfoNCE terms over each truncation in dims.
template <class S>
ad::Var<S> matryoshka_loss(const ad::Var<S>& query_embs, const ad::Var<S>& doc_embs,
                           const std::vector<int>& dims, double tau);

// Uniform draw from [1, n_layers-1], resampled every step.
int sample_sublayer(int n_layers, Rng& rng);

// 1/(1+ln i) for i < L, 1 for i = L.
double layer_weight(int i, int n_layers);

template <class S>
ad::Var<S> v1_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                   const ObjectiveConfig& cfg, int sublayer, TeacherContext<S>& ctx);

// Per-layer gradient-blocked PCA teacher embeddings at dimension k.
template <class S>
std::vector<ad::Var<S>> pca_targets(const LayerEmbeddings<S>& embs, int k, TeacherContext<S>& ctx);

template <class S>
ad::Var<S> v2_layer_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                         const ObjectiveConfig& cfg);

template <class S>
ad::Var<S> v2_dim_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                       const ObjectiveConfig& cfg, TeacherContext<S>& ctx);

template <class S>
ad::Var<S> score_alignment_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                                const ObjectiveConfig& cfg, TeacherContext<S>& ctx);

template <class S>
ad::Var<S> full_dim_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                         const ObjectiveConfig& cfg);

template <class S>
ad::Var<S> v2_total_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                         const ObjectiveConfig& cfg, TeacherContext<S>& ctx);

// Dispatch on cfg.kind. rng drives v1 sub-layer sampling in live mode; a
// capture/replay ctx pins the draw and all teacher quantities.
template <class S>
ad::Var<S> objective_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                          const ObjectiveConfig& cfg, Rng& rng, TeacherContext<S>& ctx);

}  // namespace mse2d
