#pragma once

#include <json.hpp>

#include "mse2d/encoder.hpp"
#include "mse2d/objectives.hpp"
#include "mse2d/trainer.hpp"

namespace mse2d {

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
                     {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
                     {"pooling", pooling_name(c.pooling)}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("max_seq_len").get_to(c.max_seq_len);
  c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
  j = nlohmann::json{{"kind", objective_kind_name(c.kind)},
                     {"dims", c.dims},
                     {"target_dim", c.target_dim},
                     {"lambda", c.lambda},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"temperature", c.temperature},
                     {"score", c.score},
                     {"full_dim", c.full_dim},
                     {"fix_doc", c.fix_doc},
                     {"plus_dims", c.plus_dims},
                     {"swap_kld_teacher", c.swap_kld_teacher},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
  c.kind = objective_kind_from_name(j.at("kind").get<std::string>());
  j.at("dims").get_to(c.dims);
  j.at("target_dim").get_to(c.target_dim);
  j.at("lambda").get_to(c.lambda);
  j.at("alpha").get_to(c.alpha);
  j.at("beta").get_to(c.beta);
  j.at("temperature").get_to(c.temperature);
  j.at("score").get_to(c.score);
  j.at("full_dim").get_to(c.full_dim);
  j.at("fix_doc").get_to(c.fix_doc);
  j.at("plus_dims").get_to(c.plus_dims);
  j.at("swap_kld_teacher").get_to(c.swap_kld_teacher);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"objective", c.objective},
                     {"encoder", c.encoder},
                     {"learning_rate", c.learning_rate},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"log_every", c.log_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("objective").get_to(c.objective);
  j.at("encoder").get_to(c.encoder);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
  j.at("steps").get_to(c.steps);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("log_every").get_to(c.log_every);
}

}  // namespace mse2d
