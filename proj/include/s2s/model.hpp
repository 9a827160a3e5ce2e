#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "s2s/params.hpp"
#include "s2s/sample.hpp"

namespace s2s {

enum class PoolingMode { softmax, sparsemax };

std::string_view pooling_name(PoolingMode m);
PoolingMode parse_pooling(std::string_view name);

struct ModelConfig {
  std::size_t audio_dim = 0;
  std::size_t image_dim = 0;        // raw features; the scale channel is appended
  std::size_t vocab_size = 0;
  std::size_t n_audio_sources = 4;
  std::size_t d = 32;
  std::size_t concepts = 64;        // M
  std::size_t heads = 2;
  std::size_t ffn_hidden = 0;       // 0 means 2d
  bool metadata_enabled = true;
  MetaFlags components = kAllMeta;  // components with learned tables
  PoolingMode pooling = PoolingMode::sparsemax;

  std::size_t hidden() const { return ffn_hidden ? ffn_hidden : 2 * d; }
  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Temperature pairs, in loss order.
enum class LossPair { image_audio, image_caption, audio_caption, image_composed, image_text };
inline constexpr std::array<LossPair, 5> kLossPairs = {
    LossPair::image_audio, LossPair::image_caption, LossPair::audio_caption,
    LossPair::image_composed, LossPair::image_text};
std::string_view loss_pair_name(LossPair p);

namespace param_names {
inline constexpr const char* kCodebook = "codebook";
std::string weight(Modality m);
std::string bias(Modality m);
inline constexpr const char* kTextEmbedding = "text.embedding";
std::string meta_weight(std::size_t component);  // location, month, hour
std::string meta_bias(std::size_t component);
std::string meta_table(std::size_t component);   // audio_source, caption_source
std::string meta_null(std::size_t component);
std::string temperature(LossPair p);
}  // namespace param_names

inline constexpr double kInitialTemperature = 0.07;

// Names of every trainable tensor a model with this config owns, sorted.
std::vector<std::string> parameter_names(const ModelConfig& config);

/// All trainable parameters of the encoders, the metadata fusion block, the
/// codebook and the log-temperatures.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  // Adopts an existing parameter set; shapes must match the config.
  Model(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  const Parameter& param(const std::string& name) const { return params_.at(name); }
  const Tensor& codebook() const { return params_.at(param_names::kCodebook).value; }

 private:
  ModelConfig config_;
  ParamStore params_;
};

}  // namespace s2s
