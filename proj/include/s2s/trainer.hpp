#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/model.hpp"
#include "s2s/objective.hpp"
#include "s2s/synthdata.hpp"

namespace s2s {

struct TrainConfig {
  std::size_t d = 32;
  std::size_t M = 64;
  PoolingMode pooling_mode = PoolingMode::sparsemax;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  double lr = 5e-5;
  double weight_decay = 0.2;
  std::array<double, 2> betas = {0.9, 0.98};
  double adam_eps = 1e-8;
  double alpha = 0.1;
  double pseudo_margin = 0.0;
  LossFlags loss_flags;
  bool metadata_enabled = true;
  MetaFlags metadata_components = kAllMeta;
  double metadata_dropout_p = 0.5;
  std::size_t heads = 2;
  bool decay_codebook_and_temperatures = false;
  std::string lr_schedule = "constant";
  std::uint64_t seed = 0;
  std::string train_data;
  std::string val_data;
  std::string checkpoint;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
// Closed key set: unknown keys raise UsageError; missing keys keep defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct AdamHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.2;
};

/// One AdamW step on a flat parameter block (step is 1-based). Decay is
/// decoupled: p <- p (1 - lr wd) before the adaptive update.
void adamw_update(std::span<float> param, std::span<const double> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t step, const AdamHyper& h, bool decay);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

AdamState init_adam(const ParamStore& params);
void adamw_step(ParamStore& params, AdamState& state, const AdamHyper& h, bool decay_all);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  ParamStore params;
  AdamState adam;
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double val_i2a_r10 = 0.0;
};

// Magic "S2SC", u32 version, u32 tensor count, tensors in name order
// (u16 name length, name, u8 rank, u32 extents, LE float32 data), then a
// u32-length-prefixed UTF-8 JSON blob with configs and counters.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

Model model_from_checkpoint(const Checkpoint& ckpt);
ModelConfig model_config_for(const TrainConfig& cfg, const DatasetHeader& data);

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  std::optional<LossBreakdown> mean_loss;  // empty for the untrained baseline (epoch 0)
  double val_i2a_r10 = 0.0;
  bool best = false;
  double wall_time_s = 0.0;
};

// Deterministic fields only; the wall-clock time is added on request.
nlohmann::json epoch_log_to_json(const EpochLog& e, bool with_wall_time);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  Model final_model;
};

double validation_r10(const Model& model, const Dataset& val);

// The untrained model train() starts from.
Model initial_model(const TrainConfig& config, const DatasetHeader& data);

struct TrainSinks {
  std::ostream* stdout_log = nullptr;   // one JSON object per epoch, with wall time
  std::ostream* sidecar_log = nullptr;  // same objects without wall time
  std::ostream* warnings = nullptr;
};

/// Shuffled mini-batch AdamW training; after every epoch evaluates image->audio
/// R@10% on val and keeps the best epoch. Throws NumericError on a
/// non-finite loss, naming the step and the per-term values.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const TrainSinks& sinks = {});

}  // namespace s2s
