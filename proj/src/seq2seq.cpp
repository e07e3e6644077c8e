#include "translit/seq2seq.hpp"

#include <cmath>

#include "translit/errors.hpp"

namespace translit {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::rnn:
      return "rnn";
    case ModelKind::rnn_attention:
      return "rnn_att";
    case ModelKind::transformer:
      return "transformer";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "rnn") return ModelKind::rnn;
  if (name == "rnn_att") return ModelKind::rnn_attention;
  if (name == "transformer") return ModelKind::transformer;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected rnn, rnn_att, transformer)");
}

ad::Tensor uniform_tensor(ad::Shape shape, double r, std::mt19937_64& rng) {
  ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-r, r);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

ad::Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform_tensor({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

ad::Tensor initial_value(const ParamSpec& spec, double embed_r, std::mt19937_64& rng) {
  switch (spec.init) {
    case ParamInit::zeros:
      return ad::Tensor(spec.shape);
    case ParamInit::ones:
      return ad::Tensor(spec.shape, 1.0);
    case ParamInit::xavier:
      if (spec.shape.size() != 2) throw ConfigError("xavier init needs a matrix: " + spec.name);
      return xavier_uniform(spec.shape[0], spec.shape[1], rng);
    case ParamInit::embedding:
      return uniform_tensor(spec.shape, embed_r, rng);
    case ParamInit::forget_bias: {
      ad::Tensor b(spec.shape);
      const std::size_t quarter = b.size() / 4;
      for (std::size_t k = quarter; k < 2 * quarter; ++k) b[k] = 1.0;
      return b;
    }
  }
  throw ConfigError("unknown initializer for " + spec.name);
}

ad::Tensor row_mask(std::span<const double> mask, std::size_t width) {
  ad::Tensor t({mask.size(), width});
  for (std::size_t r = 0; r < mask.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) t[r * width + c] = mask[r];
  return t;
}

}  // namespace translit
