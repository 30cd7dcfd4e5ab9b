#include "mse2d/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mse2d/pca.hpp"

namespace mse2d {

using ad::Var;

const char* objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kFull: return "full";
    case ObjectiveKind::kMse: return "mse";
    case ObjectiveKind::kV1: return "v1";
    case ObjectiveKind::kV2: return "v2";
  }
  return "?";
}

ObjectiveKind objective_kind_from_name(const std::string& name) {
  if (name == "full") return ObjectiveKind::kFull;
  if (name == "mse") return ObjectiveKind::kMse;
  if (name == "v1") return ObjectiveKind::kV1;
  if (name == "v2") return ObjectiveKind::kV2;
  throw std::invalid_argument("unknown objective kind: " + name);
}

void ObjectiveConfig::validate(int d_model) const {
  if (temperature <= 0.0) throw std::invalid_argument("ObjectiveConfig: temperature must be > 0");
  if (lambda < 0.0 || alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("ObjectiveConfig: lambda/alpha/beta must be >= 0");
  }
  const bool needs_dims = kind == ObjectiveKind::kMse || kind == ObjectiveKind::kV1 ||
                          (kind == ObjectiveKind::kV2 && plus_dims);
  if (needs_dims && dims.empty()) {
    throw std::invalid_argument("ObjectiveConfig: dimension set required for " +
                                std::string(objective_kind_name(kind)));
  }
  int prev = 0;
  for (int k : dims) {
    if (k <= prev) throw std::invalid_argument("ObjectiveConfig: dims must be strictly ascending");
    if (k > d_model) throw std::invalid_argument("ObjectiveConfig: dim " + std::to_string(k) +
                                                 " exceeds d_model " + std::to_string(d_model));
    prev = k;
  }
  if (kind == ObjectiveKind::kV2 && !plus_dims) {
    if (target_dim < 1 || target_dim > d_model) {
      throw std::invalid_argument("ObjectiveConfig: target_dim out of [1, d_model]");
    }
  }
  if (kind != ObjectiveKind::kV2 && (score || full_dim || fix_doc || plus_dims)) {
    throw std::invalid_argument("ObjectiveConfig: variants require the v2 objective");
  }
}

std::string ObjectiveConfig::label() const {
  std::string s = objective_kind_name(kind);
  if (score) s += "+score";
  if (full_dim) s += "+full-dim";
  if (fix_doc) s += "+fix-doc";
  if (plus_dims) s += "+dims";
  return s;
}

std::vector<int> ObjectiveConfig::v2_dim_set() const {
  if (plus_dims) return dims;
  return {target_dim};
}

template <class S>
Var<S> TeacherContext<S>::block(const Var<S>& v) {
  switch (mode) {
    case Mode::kLive:
      return ad::detach(v);
    case Mode::kCapture:
      captured.push_back(v.value());
      return Var<S>::constant(v.value());
    case Mode::kReplay:
      if (cursor >= captured.size()) throw std::runtime_error("TeacherContext: replay exhausted");
      return Var<S>::constant(captured[cursor++]);
  }
  throw std::logic_error("TeacherContext: bad mode");
}

template <class S>
Var<S> info_nce(const Var<S>& query_embs, const Var<S>& doc_embs, double tau) {
  const int b = query_embs.value().rows();
  if (doc_embs.value().rows() != b) {
    throw std::invalid_argument("info_nce: query/doc batch sizes differ");
  }
  Var<S> qn = ad::l2_normalize_rows(query_embs);
  Var<S> dn = ad::l2_normalize_rows(doc_embs);
  Var<S> logits = ad::scale(ad::matmul(qn, dn, /*transpose_b=*/true), static_cast<S>(1.0 / tau));
  Var<S> probs = ad::row_softmax(logits);
  Tensor<S> eye = Tensor<S>::zeros(b, b);
  for (int i = 0; i < b; ++i) eye.at(i, i) = S(1);
  Var<S> diag_logp = ad::mul(ad::log(probs), Var<S>::constant(std::move(eye)));
  return ad::scale(ad::sum(diag_logp), static_cast<S>(-1.0 / b));
}

template <class S>
Var<S> sim_distribution(const Var<S>& query_embs, const Var<S>& doc_embs, double tau) {
  Var<S> qn = ad::l2_normalize_rows(query_embs);
  Var<S> dn = ad::l2_normalize_rows(doc_embs);
  return ad::row_softmax(ad::scale(ad::matmul(qn, dn, /*transpose_b=*/true), static_cast<S>(1.0 / tau)));
}

template <class S>
Var<S> kld(const Var<S>& p, const Var<S>& q) {
  if (!p.value().same_dims(q.value())) throw std::invalid_argument("kld: dims mismatch");
  Var<S> per_entry = ad::mul(p, ad::sub(ad::log(p), ad::log(q)));
  return ad::scale(ad::sum(per_entry), S(1) / static_cast<S>(p.value().rows()));
}

template <class S>
Var<S> matryoshka_loss(const Var<S>& query_embs, const Var<S>& doc_embs, const std::vector<int>& dims,
                       double tau) {
  if (dims.empty()) throw std::invalid_argument("matryoshka_loss: empty dimension set");
  Var<S> total;
  for (int k : dims) {
    Var<S> term = info_nce(ad::truncate(query_embs, k), ad::truncate(doc_embs, k), tau);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

int sample_sublayer(int n_layers, Rng& rng) {
  if (n_layers < 2) throw std::invalid_argument("sample_sublayer: need at least 2 layers");
  return rng.uniform_int(1, n_layers - 1);
}

double layer_weight(int i, int n_layers) {
  if (i < 1 || i > n_layers) throw std::out_of_range("layer_weight: layer index out of range");
  if (i == n_layers) return 1.0;
  return 1.0 / (1.0 + std::log(static_cast<double>(i)));
}

namespace {

// KLD with the gradient-blocked teacher as p and the learning student as q.
// With swap_kld_teacher the roles flip.
template <class S>
Var<S> teacher_student_kld(const Var<S>& teacher_q, const Var<S>& teacher_d, const Var<S>& student_q,
                           const Var<S>& student_d, const ObjectiveConfig& cfg, TeacherContext<S>& ctx) {
  if (!cfg.swap_kld_teacher) {
    Var<S> p = sim_distribution(ctx.block(teacher_q), ctx.block(teacher_d), cfg.temperature);
    Var<S> q = sim_distribution(student_q, student_d, cfg.temperature);
    return kld(p, q);
  }
  Var<S> p = sim_distribution(ctx.block(student_q), ctx.block(student_d), cfg.temperature);
  Var<S> q = sim_distribution(teacher_q, teacher_d, cfg.temperature);
  return kld(p, q);
}

template <class S>
Var<S> weighted_accumulate(Var<S> total, const Var<S>& term, double weight) {
  Var<S> scaled = ad::scale(term, static_cast<S>(weight));
  return total.valid() ? ad::add(total, scaled) : scaled;
}

// Document embeddings at layer i, or the full-model output under fix-doc.
template <class S>
const Var<S>& doc_layer(const LayerEmbeddings<S>& docs, int i, const ObjectiveConfig& cfg) {
  return cfg.fix_doc ? docs.last() : docs.layer(i);
}

}  // namespace

template <class S>
Var<S> v1_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
               const ObjectiveConfig& cfg, int sublayer, TeacherContext<S>& ctx) {
  const int n_layers = queries.count();
  if (n_layers < 2) throw std::invalid_argument("v1_loss: need at least 2 layers");
  if (sublayer < 1 || sublayer >= n_layers) throw std::out_of_range("v1_loss: bad sub-layer");

  Var<S> last = matryoshka_loss(queries.last(), docs.last(), cfg.dims, cfg.temperature);
  Var<S> random = matryoshka_loss(queries.layer(sublayer), docs.layer(sublayer), cfg.dims,
                                  cfg.temperature);
  Var<S> total = ad::add(last, random);
  if (cfg.lambda != 0.0) {
    Var<S> kl = teacher_student_kld(queries.last(), docs.last(), queries.layer(sublayer),
                                    docs.layer(sublayer), cfg, ctx);
    total = ad::add(total, ad::scale(kl, static_cast<S>(cfg.lambda)));
  }
  return total;
}

template <class S>
std::vector<Var<S>> pca_targets(const LayerEmbeddings<S>& embs, int k, TeacherContext<S>& ctx) {
  std::vector<Var<S>> targets;
  targets.reserve(static_cast<size_t>(embs.count()));
  for (int i = 1; i <= embs.count(); ++i) {
    Var<S> blocked = ctx.block(embs.layer(i));
    if (blocked.value().rows() < 2) {
      throw std::invalid_argument("pca_targets: batch smaller than 2");
    }
    PcaBasis<S> basis = pca_fit(blocked.value(), k);
    targets.push_back(Var<S>::constant(pca_project(blocked.value(), basis)));
  }
  return targets;
}

template <class S>
Var<S> v2_layer_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                     const ObjectiveConfig& cfg) {
  const int n_layers = queries.count();
  Var<S> total;
  for (int i = 1; i <= n_layers; ++i) {
    const double w = layer_weight(i, n_layers);
    for (int k : cfg.v2_dim_set()) {
      Var<S> term = info_nce(ad::truncate(queries.layer(i), k),
                             ad::truncate(doc_layer(docs, i, cfg), k), cfg.temperature);
      total = weighted_accumulate(total, term, w);
    }
  }
  return total;
}

template <class S>
Var<S> v2_dim_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                   const ObjectiveConfig& cfg, TeacherContext<S>& ctx) {
  const int n_layers = queries.count();
  Var<S> total;
  for (int k : cfg.v2_dim_set()) {
    std::vector<Var<S>> target_q = pca_targets(queries, k, ctx);
    std::vector<Var<S>> target_d;
    if (!cfg.fix_doc) target_d = pca_targets(docs, k, ctx);
    for (int i = 1; i <= n_layers; ++i) {
      const double w = layer_weight(i, n_layers);
      Var<S> student_q = ad::truncate(queries.layer(i), k);
      const Var<S>& teacher_q = target_q[static_cast<size_t>(i - 1)];

      Var<S> diff_q = ad::sub(student_q, teacher_q);
      Var<S> term = ad::mean(ad::mul(diff_q, diff_q));

      Var<S> student_d, teacher_d;
      if (cfg.fix_doc) {
        // dimension losses for passages are excluded; documents enter the
        // score distribution from the full-model output only
        student_d = ad::truncate(docs.last(), k);
        teacher_d = student_d;
      } else {
        student_d = ad::truncate(docs.layer(i), k);
        teacher_d = target_d[static_cast<size_t>(i - 1)];
        Var<S> diff_d = ad::sub(student_d, teacher_d);
        term = ad::add(term, ad::mean(ad::mul(diff_d, diff_d)));
      }
      term = ad::add(term, teacher_student_kld(teacher_q, teacher_d, student_q, student_d, cfg, ctx));
      total = weighted_accumulate(total, term, w);
    }
  }
  return total;
}

template <class S>
Var<S> score_alignment_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                            const ObjectiveConfig& cfg, TeacherContext<S>& ctx) {
  const int n_layers = queries.count();
  Var<S> total;
  for (int i = 1; i <= n_layers; ++i) {
    const double w = layer_weight(i, n_layers);
    for (int k : cfg.v2_dim_set()) {
      Var<S> kl = teacher_student_kld(queries.last(), docs.last(),
                                      ad::truncate(queries.layer(i), k),
                                      ad::truncate(doc_layer(docs, i, cfg), k), cfg, ctx);
      total = weighted_accumulate(total, kl, w);
    }
  }
  return total;
}

template <class S>
Var<S> full_dim_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                     const ObjectiveConfig& cfg) {
  const int n_layers = queries.count();
  Var<S> total;
  for (int i = 1; i <= n_layers; ++i) {
    Var<S> term = info_nce(queries.layer(i), doc_layer(docs, i, cfg), cfg.temperature);
    total = weighted_accumulate(total, term, layer_weight(i, n_layers));
  }
  return total;
}

template <class S>
Var<S> v2_total_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                     const ObjectiveConfig& cfg, TeacherContext<S>& ctx) {
  Var<S> total;
  if (cfg.alpha != 0.0) {
    total = weighted_accumulate(total, v2_layer_loss(queries, docs, cfg), cfg.alpha);
  }
  if (cfg.beta != 0.0) {
    Var<S> dim_part = cfg.score ? score_alignment_loss(queries, docs, cfg, ctx)
                                : v2_dim_loss(queries, docs, cfg, ctx);
    total = weighted_accumulate(total, dim_part, cfg.beta);
  }
  // the full-dimension last-layer term the reference implementation adds
  Var<S> last = info_nce(queries.last(), docs.last(), cfg.temperature);
  total = total.valid() ? ad::add(total, last) : last;
  if (cfg.full_dim) {
    total = ad::add(total, full_dim_loss(queries, docs, cfg));
  }
  return total;
}

template <class S>
Var<S> objective_loss(const LayerEmbeddings<S>& queries, const LayerEmbeddings<S>& docs,
                      const ObjectiveConfig& cfg, Rng& rng, TeacherContext<S>& ctx) {
  switch (cfg.kind) {
    case ObjectiveKind::kFull:
      return info_nce(queries.last(), docs.last(), cfg.temperature);
    case ObjectiveKind::kMse:
      return matryoshka_loss(queries.last(), docs.last(), cfg.dims, cfg.temperature);
    case ObjectiveKind::kV1: {
      int r = ctx.sublayer;
      if (ctx.mode != TeacherContext<S>::Mode::kReplay) {
        r = sample_sublayer(queries.count(), rng);
        ctx.sublayer = r;
      }
      return v1_loss(queries, docs, cfg, r, ctx);
    }
    case ObjectiveKind::kV2:
      return v2_total_loss(queries, docs, cfg, ctx);
  }
  throw std::logic_error("objective_loss: bad kind");
}

#define MSE2D_INSTANTIATE(S)                                                                          \
  template struct TeacherContext<S>;                                                                  \
  template ad::Var<S> info_nce<S>(const ad::Var<S>&, const ad::Var<S>&, double);                      \
  template ad::Var<S> sim_distribution<S>(const ad::Var<S>&, const ad::Var<S>&, double);              \
  template ad::Var<S> kld<S>(const ad::Var<S>&, const ad::Var<S>&);                                   \
  template ad::Var<S> matryoshka_loss<S>(const ad::Var<S>&, const ad::Var<S>&, const std::vector<int>&, \
                                         double);                                                     \
  template ad::Var<S> v1_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,                \
                                 const ObjectiveConfig&, int, TeacherContext<S>&);                    \
  template std::vector<ad::Var<S>> pca_targets<S>(const LayerEmbeddings<S>&, int, TeacherContext<S>&); \
  template ad::Var<S> v2_layer_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,          \
                                       const ObjectiveConfig&);                                       \
  template ad::Var<S> v2_dim_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,            \
                                     const ObjectiveConfig&, TeacherContext<S>&);                     \
  template ad::Var<S> score_alignment_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,   \
                                              const ObjectiveConfig&, TeacherContext<S>&);            \
  template ad::Var<S> full_dim_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,          \
                                       const ObjectiveConfig&);                                       \
  template ad::Var<S> v2_total_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,          \
                                       const ObjectiveConfig&, TeacherContext<S>&);                   \
  template ad::Var<S> objective_loss<S>(const LayerEmbeddings<S>&, const LayerEmbeddings<S>&,         \
                                        const ObjectiveConfig&, Rng&, TeacherContext<S>&);

MSE2D_INSTANTIATE(float)
MSE2D_INSTANTIATE(double)

#undef MSE2D_INSTANTIATE

}  // namespace mse2d
