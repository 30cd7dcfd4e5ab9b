#include "mse2d/gradcheck_suite.hpp"

#include <iomanip>

#include "mse2d/encoder.hpp"
#include "mse2d/gradcheck.hpp"
#include "mse2d/objectives.hpp"
#include "mse2d/rng.hpp"

namespace mse2d {

namespace {

TokenBatch random_batch(Rng& rng, const EncoderConfig& cfg, int batch, int len_min, int len_max) {
  std::vector<std::vector<int>> seqs;
  for (int i = 0; i < batch; ++i) {
    std::vector<int> ids(static_cast<size_t>(rng.uniform_int(len_min, len_max)));
    for (auto& id : ids) id = rng.uniform_int(2, cfg.vocab_size - 1);
    seqs.push_back(std::move(ids));
  }
  return TokenBatch::from_ids(std::move(seqs));
}

double check_config(const ObjectiveConfig& objective, const EncoderConfig& enc, uint64_t seed) {
  constexpr int kBatch = 6;
  Rng rng(seed);
  const TokenBatch queries = random_batch(rng, enc, kBatch, 3, enc.max_seq_len - 1);
  const TokenBatch docs = random_batch(rng, enc, kBatch, 4, enc.max_seq_len);

  EncoderParams<double> base = EncoderParams<double>::init(enc, seed);
  std::vector<Tensor<double>> point;
  for (const auto& t : base.tensors()) point.push_back(t);

  // teachers and the v1 sub-layer draw are captured once at the base point,
  // then replayed for every finite-difference evaluation
  TeacherContext<double> ctx;
  ctx.mode = TeacherContext<double>::Mode::kCapture;
  {
    Rng objective_rng(seed + 1);
    LayerEmbeddings<double> q = encode_all_layers(queries, base, enc);
    LayerEmbeddings<double> d = encode_all_layers(docs, base, enc);
    objective_loss(q, d, objective, objective_rng, ctx);
  }

  auto build = [&](const std::vector<ad::Var<double>>& leaves) {
    EncoderParams<double> params = EncoderParams<double>::bind(enc, leaves);
    LayerEmbeddings<double> q = encode_all_layers(queries, params, enc);
    LayerEmbeddings<double> d = encode_all_layers(docs, params, enc);
    ctx.start_replay();
    Rng unused_rng(0);
    return objective_loss(q, d, objective, unused_rng, ctx);
  };
  return gradcheck<double>(build, point, 1e-5);
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(int n_seeds, double tolerance, std::ostream* log) {
  EncoderConfig enc;
  enc.vocab_size = 16;
  enc.d_model = 8;
  enc.n_layers = 2;
  enc.n_heads = 2;
  enc.d_ff = 16;
  enc.max_seq_len = 6;

  ObjectiveConfig base;
  base.dims = {2, 4};
  base.target_dim = 4;
  base.temperature = 0.05;

  std::vector<ObjectiveConfig> configs;
  auto push = [&](ObjectiveKind kind, bool score, bool full_dim, bool fix_doc) {
    ObjectiveConfig c = base;
    c.kind = kind;
    c.score = score;
    c.full_dim = full_dim;
    c.fix_doc = fix_doc;
    configs.push_back(c);
  };
  push(ObjectiveKind::kFull, false, false, false);
  push(ObjectiveKind::kMse, false, false, false);
  push(ObjectiveKind::kV1, false, false, false);
  push(ObjectiveKind::kV2, false, false, false);
  push(ObjectiveKind::kV2, true, false, false);
  push(ObjectiveKind::kV2, false, true, false);
  push(ObjectiveKind::kV2, false, false, true);

  std::vector<GradcheckCase> report;
  for (const auto& cfg : configs) {
    GradcheckCase c;
    c.label = cfg.label();
    for (int s = 0; s < n_seeds; ++s) {
      c.max_rel_err = std::max(c.max_rel_err, check_config(cfg, enc, 1000 + 17 * static_cast<uint64_t>(s)));
    }
    c.pass = c.max_rel_err < tolerance;
    if (log) {
      (*log) << (c.pass ? "PASS" : "FAIL") << " " << std::left << std::setw(14) << c.label
             << " max relative error " << std::scientific << std::setprecision(3) << c.max_rel_err
             << "\n";
    }
    report.push_back(std::move(c));
  }
  return report;
}

}  // namespace mse2d
