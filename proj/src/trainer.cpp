#include "mse2d/trainer.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mse2d/config_json.hpp"
#include "mse2d/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mse2d {

void TrainConfig::validate() const {
  encoder.validate();
  objective.validate(encoder.d_model);
  if (learning_rate <= 0.0 || adam_beta1 <= 0.0 || adam_beta2 <= 0.0 || adam_eps <= 0.0) {
    throw std::invalid_argument("TrainConfig: optimizer hyperparameters must be positive");
  }
  if (steps < 1 || batch_size < 1 || log_every < 1) {
    throw std::invalid_argument("TrainConfig: steps, batch_size and log_every must be positive");
  }
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  // splitmix64 finalizer
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class EpochSampler {
 public:
  EpochSampler(size_t n, uint64_t seed) : order_(n), rng_(seed) {
    for (size_t i = 0; i < n; ++i) order_[i] = i;
    rng_.shuffle(order_);
  }

  size_t next() {
    if (cursor_ == order_.size()) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<size_t> order_;
  Rng rng_;
  size_t cursor_ = 0;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<TrainExample>& dataset,
                  const Vocabulary& vocab, std::ostream* log) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (vocab.size() != cfg.encoder.vocab_size) {
    throw std::invalid_argument("train: vocabulary size " + std::to_string(vocab.size()) +
                                " != encoder vocab_size " + std::to_string(cfg.encoder.vocab_size));
  }
  const int batch = std::min<int>(cfg.batch_size, static_cast<int>(dataset.size()));
  if (cfg.objective.kind == ObjectiveKind::kV2 && !cfg.objective.score && cfg.objective.beta != 0.0) {
    for (int k : cfg.objective.v2_dim_set()) {
      if (batch <= k) {
        throw std::invalid_argument(
            "train: v2 dimension loss needs batch_size > every target dim (PCA rank); got batch " +
            std::to_string(batch) + " with dim " + std::to_string(k));
      }
    }
  }

  EncoderParams<float> params = EncoderParams<float>::init(cfg.encoder, cfg.seed);
  auto named = params.named();
  std::vector<ad::Var<float>> leaves;
  leaves.reserve(named.size());
  for (auto& [name, var] : named) leaves.push_back(var);

  AdamState<float> adam = make_adam_state(leaves);
  const AdamHyper hyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  EpochSampler sampler(dataset.size(), mix_seed(cfg.seed, 1));
  Rng objective_rng(mix_seed(cfg.seed, 2));

  TrainResult result;
  result.loss_history.reserve(static_cast<size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::string> queries, positives;
    queries.reserve(static_cast<size_t>(batch));
    positives.reserve(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      const auto& ex = dataset[sampler.next()];
      queries.push_back(ex.query);
      positives.push_back(ex.positive);
    }
    TokenBatch q_batch = TokenBatch::from_texts(queries, vocab, cfg.encoder.max_seq_len);
    TokenBatch d_batch = TokenBatch::from_texts(positives, vocab, cfg.encoder.max_seq_len);

    LayerEmbeddings<float> q_embs = encode_all_layers(q_batch, params, cfg.encoder);
    LayerEmbeddings<float> d_embs = encode_all_layers(d_batch, params, cfg.encoder);

    TeacherContext<float> ctx;
    ad::Var<float> loss = objective_loss(q_embs, d_embs, cfg.objective, objective_rng, ctx);
    const double loss_value = static_cast<double>(loss.value().scalar_value());
    if (!std::isfinite(loss_value)) throw std::runtime_error("train: non-finite loss");
    result.loss_history.push_back(loss_value);

    ad::backward(loss);
    std::vector<Tensor<float>> grads;
    grads.reserve(leaves.size());
    for (const auto& leaf : leaves) grads.push_back(leaf.grad());
    adam_step(leaves, grads, adam, hyper);

    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      (*log) << "step " << step << " loss " << std::setprecision(6) << std::fixed << loss_value
             << "\n";
    }
  }

  result.checkpoint.config = cfg;
  result.checkpoint.final_loss = result.loss_history.back();
  for (const auto& [name, var] : params.named()) {
    result.checkpoint.tensors.emplace_back(name, var.value());
  }
  return result;
}

// ---------------------------------------------------------------------------
// checkpoint file format
//   magic "2DMSE1\0\0" | version u32 LE | json length u64 LE | json UTF-8 |
//   repeated tensor records: name len u32 LE, name, rank u32 LE,
//   dims u64 LE each, row-major f32 LE payload
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'2', 'D', 'M', 'S', 'E', '1', '\0', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  nlohmann::json j{{"train_config", ckpt.config}, {"final_loss", ckpt.final_loss}};
  const std::string config = j.dump();
  write_u64(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(tensor.dims.size()));
    for (int d : tensor.dims) write_u64(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  const uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  }
  const uint64_t config_len = read_u64(in);
  std::string config(config_len, '\0');
  in.read(config.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config block");

  Checkpoint ckpt;
  nlohmann::json j = nlohmann::json::parse(config);
  j.at("train_config").get_to(ckpt.config);
  j.at("final_loss").get_to(ckpt.final_loss);

  while (in.peek() != std::char_traits<char>::eof()) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated tensor name");
    const uint32_t rank = read_u32(in);
    std::vector<int> dims(rank);
    size_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      dims[i] = static_cast<int>(read_u64(in));
      if (dims[i] <= 0) throw std::runtime_error("checkpoint: bad dim in tensor " + name);
      numel *= static_cast<size_t>(dims[i]);
    }
    std::vector<float> payload(numel);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != numel * sizeof(float)) {
      throw std::runtime_error("checkpoint: tensor byte-count mismatch for " + name);
    }
    ckpt.tensors.emplace_back(name, Tensor<float>(std::move(dims), std::move(payload)));
  }
  return ckpt;
}

EncoderParams<float> params_from_checkpoint(const Checkpoint& ckpt, bool trainable) {
  std::vector<ad::Var<float>> leaves;
  leaves.reserve(ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    (void)name;
    leaves.push_back(trainable ? ad::Var<float>::parameter(tensor) : ad::Var<float>::constant(tensor));
  }
  EncoderParams<float> params = EncoderParams<float>::bind(ckpt.config.encoder, leaves);
  params.validate(ckpt.config.encoder);
  const auto named = params.named();
  for (size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ckpt.tensors[i].first) {
      throw std::runtime_error("checkpoint: unexpected tensor order (" + ckpt.tensors[i].first +
                               " where " + named[i].first + " expected)");
    }
  }
  return params;
}

}  // namespace mse2d
