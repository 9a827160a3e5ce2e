#include "s2s/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "s2s/error.hpp"
#include "s2s/rng.hpp"

namespace s2s {

std::string_view pooling_name(PoolingMode m) {
  return m == PoolingMode::softmax ? "softmax" : "sparsemax";
}

PoolingMode parse_pooling(std::string_view name) {
  if (name == "softmax") return PoolingMode::softmax;
  if (name == "sparsemax") return PoolingMode::sparsemax;
  throw UsageError("pooling mode must be softmax or sparsemax, got " + std::string(name));
}

std::string_view loss_pair_name(LossPair p) {
  switch (p) {
    case LossPair::image_audio: return "i_a";
    case LossPair::image_caption: return "i_c";
    case LossPair::audio_caption: return "a_c";
    case LossPair::image_composed: return "i_ac";
    case LossPair::image_text: return "i_t";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (audio_dim == 0 || image_dim == 0 || vocab_size == 0) {
    throw UsageError("model input dimensions must be positive");
  }
  if (d == 0 || concepts < 2) throw UsageError("model needs d >= 1 and M >= 2");
  if (heads == 0 || d % heads != 0) throw UsageError("d must be divisible by the head count");
  if (n_audio_sources == 0 || n_audio_sources > 4) throw UsageError("n_audio_sources must be in 1..4");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t k = 0; k < kMetaComponents; ++k) {
    if (c.components[k]) comps.push_back(std::string(kMetaComponentNames[k]));
  }
  return {{"audio_dim", c.audio_dim},   {"image_dim", c.image_dim},
          {"vocab_size", c.vocab_size}, {"n_audio_sources", c.n_audio_sources},
          {"d", c.d},                   {"M", c.concepts},
          {"heads", c.heads},           {"ffn_hidden", c.hidden()},
          {"metadata_enabled", c.metadata_enabled},
          {"metadata_components", comps},
          {"pooling_mode", std::string(pooling_name(c.pooling))}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.audio_dim = j.at("audio_dim").get<std::size_t>();
    c.image_dim = j.at("image_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.n_audio_sources = j.at("n_audio_sources").get<std::size_t>();
    c.d = j.at("d").get<std::size_t>();
    c.concepts = j.at("M").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
    c.metadata_enabled = j.at("metadata_enabled").get<bool>();
    c.components = kNoMeta;
    for (const auto& name : j.at("metadata_components")) {
      c.components[meta_component_index(name.get<std::string>())] = true;
    }
    c.pooling = parse_pooling(j.at("pooling_mode").get<std::string>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
}

namespace param_names {

std::string weight(Modality m) { return std::string(modality_name(m)) + ".weight"; }
std::string bias(Modality m) { return std::string(modality_name(m)) + ".bias"; }
std::string meta_weight(std::size_t k) { return "meta." + std::string(kMetaComponentNames[k]) + ".weight"; }
std::string meta_bias(std::size_t k) { return "meta." + std::string(kMetaComponentNames[k]) + ".bias"; }
std::string meta_table(std::size_t k) { return "meta." + std::string(kMetaComponentNames[k]) + ".table"; }
std::string meta_null(std::size_t k) { return "meta." + std::string(kMetaComponentNames[k]) + ".null"; }
std::string temperature(LossPair p) { return "temperature." + std::string(loss_pair_name(p)); }

}  // namespace param_names

namespace {

enum class Init { fan_in, unit, zeros, ones, inv_sqrt_d, codebook, log_temperature };

struct Slot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  Init init;
  bool decay;
};

std::vector<Slot> layout(const ModelConfig& c) {
  namespace pn = param_names;
  const std::size_t d = c.d;
  std::vector<Slot> s;
  s.push_back({pn::weight(Modality::audio), c.audio_dim, d, Init::fan_in, true});
  s.push_back({pn::bias(Modality::audio), 1, d, Init::zeros, false});
  s.push_back({pn::weight(Modality::image), c.image_dim + 1, d, Init::fan_in, true});
  s.push_back({pn::bias(Modality::image), 1, d, Init::zeros, false});
  s.push_back({pn::kTextEmbedding, c.vocab_size, d, Init::unit, true});
  for (auto m : {Modality::audio_caption, Modality::image_caption}) {
    s.push_back({pn::weight(m), d, d, Init::fan_in, true});
    s.push_back({pn::bias(m), 1, d, Init::zeros, false});
  }
  if (c.metadata_enabled) {
    const std::size_t feature_width[3] = {4, 2, 2};
    for (std::size_t k = 0; k < 3; ++k) {
      if (!c.components[k]) continue;
      s.push_back({pn::meta_weight(k), feature_width[k], d, Init::fan_in, true});
      s.push_back({pn::meta_bias(k), 1, d, Init::zeros, false});
    }
    if (c.components[kAudioSource]) {
      s.push_back({pn::meta_table(kAudioSource), c.n_audio_sources, d, Init::unit, true});
    }
    if (c.components[kCaptionSource]) {
      s.push_back({pn::meta_table(kCaptionSource), 2, d, Init::unit, true});
    }
    // Nulls stand in for real metadata tokens, so they start on the same scale.
    for (std::size_t k = 0; k < kMetaComponents; ++k) {
      s.push_back({pn::meta_null(k), 1, d, Init::unit, false});
    }
    // Output projections of both residual branches start at zero so the
    // block begins as plain per-token normalization.
    for (const char* proj : {"q", "k", "v", "o"}) {
      const Init init = proj[0] == 'o' ? Init::zeros : Init::fan_in;
      s.push_back({std::string("fusion.") + proj + ".weight", d, d, init, true});
      s.push_back({std::string("fusion.") + proj + ".bias", 1, d, Init::zeros, false});
    }
    // Unit-norm fused tokens, on the scale of the tanh patch embeddings.
    s.push_back({"fusion.norm.gain", 1, d, Init::inv_sqrt_d, false});
    s.push_back({"fusion.norm.bias", 1, d, Init::zeros, false});
    s.push_back({"fusion.ffn1.weight", d, c.hidden(), Init::fan_in, true});
    s.push_back({"fusion.ffn1.bias", 1, c.hidden(), Init::zeros, false});
    s.push_back({"fusion.ffn2.weight", c.hidden(), d, Init::zeros, true});
    s.push_back({"fusion.ffn2.bias", 1, d, Init::zeros, false});
  }
  s.push_back({pn::kCodebook, c.concepts, d, Init::codebook, false});
  for (auto p : kLossPairs) s.push_back({pn::temperature(p), 1, 1, Init::log_temperature, false});
  return s;
}

Tensor init_tensor(const Slot& slot, std::size_t d, Rng rng) {
  std::vector<float> v(slot.rows * slot.cols);
  switch (slot.init) {
    case Init::fan_in: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(slot.rows));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
      break;
    }
    case Init::unit:
      for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      break;
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(v.begin(), v.end(), 1.0f);
      break;
    case Init::inv_sqrt_d:
      std::fill(v.begin(), v.end(), static_cast<float>(1.0 / std::sqrt(static_cast<double>(d))));
      break;
    case Init::codebook: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(d));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
      break;
    }
    case Init::log_temperature:
      std::fill(v.begin(), v.end(), static_cast<float>(std::log(kInitialTemperature)));
      break;
  }
  return Tensor::matrix(slot.rows, slot.cols, std::move(v));
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

}  // namespace

std::vector<std::string> parameter_names(const ModelConfig& config) {
  std::vector<std::string> out;
  for (const auto& slot : layout(config)) out.push_back(slot.name);
  std::sort(out.begin(), out.end());
  return out;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const Rng root = Rng(seed).split(0x6d6f64656cULL);
  for (const auto& slot : layout(config_)) {
    params_.add(slot.name, init_tensor(slot, config_.d, root.split(name_hash(slot.name))), slot.decay);
  }
}

Model::Model(ModelConfig config, ParamStore params) : config_(std::move(config)) {
  config_.validate();
  for (const auto& slot : layout(config_)) {
    if (!params.contains(slot.name)) throw FormatError("checkpoint is missing tensor " + slot.name);
    const Tensor& t = params.at(slot.name).value;
    if (t.rows() != slot.rows || t.cols() != slot.cols) {
      throw FormatError("tensor " + slot.name + " has shape " + t.shape_string() + ", expected [" +
                        std::to_string(slot.rows) + ", " + std::to_string(slot.cols) + "]");
    }
    params_.add(slot.name, t, slot.decay);
  }
  if (params.size() != params_.size()) {
    for (const auto& name : params.names()) {
      if (!params_.contains(name)) throw FormatError("unexpected tensor " + name + " for this model config");
    }
  }
}

}  // namespace s2s
