#include "s2s/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "s2s/error.hpp"
#include "s2s/evalsuite.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/rng.hpp"

namespace s2s {

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw UsageError("lr must be non-negative");
  if (weight_decay < 0.0) throw UsageError("weight_decay must be non-negative");
  if (metadata_dropout_p < 0.0 || metadata_dropout_p > 1.0) throw UsageError("metadata_dropout_p must be in [0,1]");
  if (alpha < 0.0) throw UsageError("alpha must be non-negative");
  if (!loss_flags.any()) throw UsageError("at least one loss term must be enabled");
  if (betas[0] < 0.0 || betas[0] >= 1.0 || betas[1] < 0.0 || betas[1] >= 1.0) throw UsageError("betas must be in [0,1)");
  if (lr_schedule != "constant") throw UsageError("only the constant lr_schedule is implemented");
  if (M < 2 || d < 1) throw UsageError("need d >= 1 and M >= 2");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t k = 0; k < kMetaComponents; ++k) {
    if (c.metadata_components[k]) comps.push_back(std::string(kMetaComponentNames[k]));
  }
  return {{"d", c.d},
          {"M", c.M},
          {"pooling_mode", std::string(pooling_name(c.pooling_mode))},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"betas", {c.betas[0], c.betas[1]}},
          {"adam_eps", c.adam_eps},
          {"alpha", c.alpha},
          {"pseudo_margin", c.pseudo_margin},
          {"loss_flags",
           {{"trimodal", c.loss_flags.trimodal},
            {"composed", c.loss_flags.composed},
            {"image_text", c.loss_flags.image_text}}},
          {"metadata_enabled", c.metadata_enabled},
          {"metadata_components", comps},
          {"metadata_dropout_p", c.metadata_dropout_p},
          {"heads", c.heads},
          {"decay_codebook_and_temperatures", c.decay_codebook_and_temperatures},
          {"lr_schedule", c.lr_schedule},
          {"seed", c.seed},
          {"train_data", c.train_data},
          {"val_data", c.val_data},
          {"checkpoint", c.checkpoint}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("train config must be an object");
  TrainConfig c;
  const auto known = train_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown train config key: " + key);
  }
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    read("d", c.d);
    read("M", c.M);
    if (j.contains("pooling_mode")) c.pooling_mode = parse_pooling(j.at("pooling_mode").get<std::string>());
    read("batch_size", c.batch_size);
    read("epochs", c.epochs);
    read("lr", c.lr);
    read("weight_decay", c.weight_decay);
    if (j.contains("betas")) {
      const auto b = j.at("betas").get<std::vector<double>>();
      if (b.size() != 2) throw UsageError("betas must hold two numbers");
      c.betas = {b[0], b[1]};
    }
    read("adam_eps", c.adam_eps);
    read("alpha", c.alpha);
    read("pseudo_margin", c.pseudo_margin);
    if (j.contains("loss_flags")) {
      const auto& f = j.at("loss_flags");
      for (const auto& [key, value] : f.items()) {
        if (key != "trimodal" && key != "composed" && key != "image_text") {
          throw UsageError("unknown loss flag: " + key);
        }
      }
      c.loss_flags.trimodal = f.value("trimodal", true);
      c.loss_flags.composed = f.value("composed", true);
      c.loss_flags.image_text = f.value("image_text", true);
    }
    read("metadata_enabled", c.metadata_enabled);
    if (j.contains("metadata_components")) {
      c.metadata_components = kNoMeta;
      for (const auto& name : j.at("metadata_components")) {
        c.metadata_components[meta_component_index(name.get<std::string>())] = true;
      }
    }
    read("metadata_dropout_p", c.metadata_dropout_p);
    read("heads", c.heads);
    read("decay_codebook_and_temperatures", c.decay_codebook_and_temperatures);
    read("lr_schedule", c.lr_schedule);
    read("seed", c.seed);
    read("train_data", c.train_data);
    read("val_data", c.val_data);
    read("checkpoint", c.checkpoint);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad train config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

void adamw_update(std::span<float> param, std::span<const double> grad, std::span<float> m, std::span<float> v,
                  std::uint64_t step, const AdamHyper& h, bool decay) {
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double p = param[i];
    if (decay) p *= 1.0 - h.lr * h.weight_decay;
    const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    p -= h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
    param[i] = static_cast<float>(p);
  }
}

AdamState init_adam(const ParamStore& params) {
  AdamState s;
  for (const auto& [name, p] : params) {
    s.m.emplace(name, Tensor::zeros(p.value.dims()));
    s.v.emplace(name, Tensor::zeros(p.value.dims()));
  }
  return s;
}

void adamw_step(ParamStore& params, AdamState& state, const AdamHyper& h, bool decay_all) {
  ++state.step;
  for (auto& [name, p] : params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for " + name);
    }
    adamw_update(p.value.mutable_data(), p.grad, state.m.at(name).mutable_data(), state.v.at(name).mutable_data(),
                 state.step, h, decay_all || p.decay);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint binary format

namespace {

constexpr char kMagic[4] = {'S', '2', 'S', 'C'};
constexpr const char* kAdamM = "adam.m/";
constexpr const char* kAdamV = "adam.v/";

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xffu));
  }
  void f32(float x) { le(std::bit_cast<std::uint32_t>(x)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  bool has(std::size_t n) const { return pos_ + n <= b_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  template <class T>
  T le(const char* what) {
    if (!has(sizeof(T))) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string str(std::size_t n, const char* what) {
    if (!has(n)) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t peek(std::size_t ahead) const { return b_[pos_ + ahead]; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw UsageError("tensor name too long");
  w.le(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) w.le(static_cast<std::uint32_t>(d));
  for (float x : t.data()) w.f32(x);
}

// A config blob is a u32 length followed by exactly that many bytes of a
// JSON object and nothing else.
bool blob_starts_here(const ByteReader& r) {
  if (!r.has(5)) return false;
  const std::size_t len = static_cast<std::size_t>(r.peek(0)) | static_cast<std::size_t>(r.peek(1)) << 8 |
                          static_cast<std::size_t>(r.peek(2)) << 16 | static_cast<std::size_t>(r.peek(3)) << 24;
  return len + 4 == r.remaining() && r.peek(4) == '{';
}

nlohmann::json blob_json(const Checkpoint& c) {
  return {{"model", model_config_to_json(c.model)},
          {"train", train_config_to_json(c.train)},
          {"step", c.step},
          {"epoch", c.epoch},
          {"adam_step", c.adam.step},
          {"val_i2a_r10", c.val_i2a_r10}};
}

std::vector<std::string> expected_tensor_names(const ModelConfig& mc) {
  std::vector<std::string> names;
  for (const auto& n : parameter_names(mc)) {
    names.push_back(n);
    names.push_back(kAdamM + n);
    names.push_back(kAdamV + n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::map<std::string, const Tensor*> tensors;
  for (const auto& [name, p] : ckpt.params) tensors.emplace(name, &p.value);
  for (const auto& [name, t] : ckpt.adam.m) tensors.emplace(kAdamM + name, &t);
  for (const auto& [name, t] : ckpt.adam.v) tensors.emplace(kAdamV + name, &t);
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) write_tensor(w, name, *t);
  const auto blob = blob_json(ckpt).dump();
  w.le(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob.data(), blob.size());
  return w.take();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.str(4, "magic");
  if (magic != std::string(kMagic, 4)) throw FormatError("not a checkpoint: bad magic (expected \"S2SC\")");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  std::map<std::string, Tensor> tensors;
  std::size_t read = 0;
  for (; read < count; ++read) {
    if (blob_starts_here(r)) break;
    const auto name_len = r.le<std::uint16_t>("tensor name length");
    auto name = r.str(name_len, "tensor name");
    const auto rank = r.le<std::uint8_t>("tensor rank");
    if (rank == 0) throw FormatError("tensor " + name + " has rank 0");
    std::vector<std::size_t> dims;
    std::size_t n = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      dims.push_back(r.le<std::uint32_t>("tensor extent"));
      if (dims.back() == 0) throw FormatError("tensor " + name + " has a zero extent");
      n *= dims.back();
    }
    if (!r.has(4 * n)) throw FormatError("checkpoint truncated inside tensor " + name);
    std::vector<float> data(n);
    for (auto& x : data) x = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
    try {
      if (!tensors.emplace(name, Tensor(std::move(dims), std::move(data))).second) {
        throw FormatError("duplicate tensor " + name);
      }
    } catch (const NumericError& e) {
      throw FormatError("tensor " + name + ": " + e.what());
    }
  }
  if (!blob_starts_here(r)) {
    if (read == count) throw FormatError("checkpoint body holds more tensors than the declared " + std::to_string(count));
    throw FormatError("checkpoint truncated: config blob missing");
  }
  const auto blob_len = r.le<std::uint32_t>("config length");
  const auto blob = r.str(blob_len, "config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
  }
  Checkpoint c;
  try {
    c.model = model_config_from_json(j.at("model"));
    c.train = train_config_from_json(j.at("train"));
    c.step = j.at("step").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.adam.step = j.at("adam_step").get<std::uint64_t>();
    c.val_i2a_r10 = j.at("val_i2a_r10").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
  }
  const auto expected = expected_tensor_names(c.model);
  if (read != count || tensors.size() != expected.size()) {
    for (const auto& name : expected) {
      if (!tensors.count(name)) {
        throw FormatError("checkpoint declares " + std::to_string(count) + " tensors but the body holds " +
                          std::to_string(read) + "; first missing tensor: " + name);
      }
    }
    throw FormatError("checkpoint holds unexpected tensors");
  }
  ParamStore params;
  for (const auto& name : parameter_names(c.model)) {
    params.add(name, tensors.at(name));
    c.adam.m.emplace(name, tensors.at(kAdamM + name));
    c.adam.v.emplace(name, tensors.at(kAdamV + name));
  }
  // Re-adopt through Model to validate shapes and restore decay flags.
  Model m(c.model, std::move(params));
  c.params = std::move(m.params());
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

Model model_from_checkpoint(const Checkpoint& ckpt) { return Model(ckpt.model, ckpt.params); }

ModelConfig model_config_for(const TrainConfig& cfg, const DatasetHeader& data) {
  ModelConfig mc;
  mc.audio_dim = data.audio_dim;
  mc.image_dim = data.image_dim;
  mc.vocab_size = data.vocab_size;
  mc.n_audio_sources = data.n_audio_sources ? data.n_audio_sources : 4;
  mc.d = cfg.d;
  mc.concepts = cfg.M;
  mc.heads = cfg.heads;
  mc.metadata_enabled = cfg.metadata_enabled;
  mc.components = cfg.metadata_components;
  mc.pooling = cfg.pooling_mode;
  mc.validate();
  return mc;
}

// ---------------------------------------------------------------------------
// Training loop

nlohmann::json epoch_log_to_json(const EpochLog& e, bool with_wall_time) {
  nlohmann::json j = {{"epoch", e.epoch}, {"step", e.step}, {"val_i2a_r10", e.val_i2a_r10}, {"best", e.best}};
  if (e.mean_loss) {
    nlohmann::json loss = {{"total", e.mean_loss->total}};
    for (auto p : kLossPairs) {
      if (const auto& t = e.mean_loss->terms[static_cast<std::size_t>(p)]) loss[std::string(loss_pair_name(p))] = *t;
    }
    if (e.mean_loss->trimodal) loss["tri"] = *e.mean_loss->trimodal;
    j["loss"] = loss;
  }
  if (with_wall_time) j["wall_time_s"] = e.wall_time_s;
  return j;
}

double validation_r10(const Model& model, const Dataset& val) {
  return evaluate(embed_gallery(val, model, kAllMeta), Direction::i2a, ComposedMode::none).recall_at_10pct;
}

Model initial_model(const TrainConfig& config, const DatasetHeader& data) {
  return Model(model_config_for(config, data), Rng(config.seed).split(1).next_u64());
}

namespace {

std::string describe(const LossBreakdown& b) {
  std::string s = "total=" + std::to_string(b.total);
  for (auto p : kLossPairs) {
    if (const auto& t = b.terms[static_cast<std::size_t>(p)]) s += " " + std::string(loss_pair_name(p)) + "=" + std::to_string(*t);
  }
  return s;
}

void emit(const TrainSinks& sinks, const EpochLog& e) {
  if (sinks.stdout_log) *sinks.stdout_log << epoch_log_to_json(e, true).dump() << '\n' << std::flush;
  if (sinks.sidecar_log) *sinks.sidecar_log << epoch_log_to_json(e, false).dump() << '\n' << std::flush;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const TrainSinks& sinks) {
  config.validate();
  if (train_data.records.empty() || val_data.records.empty()) throw FormatError("train and val sets must be non-empty");
  if (train_data.header.audio_dim != val_data.header.audio_dim || train_data.header.image_dim != val_data.header.image_dim) {
    throw FormatError("train and val datasets have different dimensions");
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const Rng root(config.seed);
  Model model = initial_model(config, train_data.header);
  AdamState adam = init_adam(model.params());
  const AdamHyper hyper{config.lr, config.betas[0], config.betas[1], config.adam_eps, config.weight_decay};
  const LossOptions loss_options{config.alpha, config.pseudo_margin, config.loss_flags};

  TrainResult result{Checkpoint{}, {}, model};
  auto snapshot = [&](std::size_t epoch, std::uint64_t step, double r10) {
    Checkpoint c;
    c.model = model.config();
    c.train = config;
    c.params = model.params();
    c.adam = adam;
    c.step = step;
    c.epoch = epoch;
    c.val_i2a_r10 = r10;
    return c;
  };

  EpochLog baseline;
  baseline.val_i2a_r10 = validation_r10(model, val_data);
  baseline.wall_time_s = elapsed();
  result.log.push_back(baseline);
  emit(sinks, baseline);

  const std::size_t n = train_data.records.size();
  std::vector<std::size_t> order(n);
  std::uint64_t step = 0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng epoch_rng = root.split(2).split(epoch);
    epoch_rng.shuffle(std::span<std::size_t>(order));

    LossBreakdown sum;
    std::size_t batches = 0;
    std::deque<double> window;
    double previous_average = std::numeric_limits<double>::infinity();
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      if (end - begin < 2 && batches > 0) break;  // a single-sample batch has zero contrastive loss
      std::vector<const RawSample*> batch;
      std::vector<MetaFlags> dropped;
      Rng mask_rng = root.split(3).split(step);
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&train_data.records[order[i]]);
        MetaFlags d{};
        if (config.metadata_enabled) {
          for (auto& flag : d) flag = mask_rng.bernoulli(config.metadata_dropout_p);
        }
        dropped.push_back(d);
      }
      ad::Tape tape;
      auto out = graph::batch_loss(tape, model, batch, dropped, loss_options);
      const auto terms = graph::breakdown(out.loss);
      if (!std::isfinite(terms.total)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + ": " + describe(terms));
      }
      tape.backward(out.loss.total);
      model.params().zero_grad();
      tape.accumulate_into(model.params());
      adamw_step(model.params(), adam, hyper, config.decay_codebook_and_temperatures);
      ++step;

      sum.total += terms.total;
      for (std::size_t t = 0; t < 5; ++t) {
        if (terms.terms[t]) sum.terms[t] = sum.terms[t].value_or(0.0) + *terms.terms[t];
      }
      if (terms.trimodal) sum.trimodal = sum.trimodal.value_or(0.0) + *terms.trimodal;
      ++batches;

      if (epoch == 1) {
        window.push_back(terms.total);
        if (window.size() > 10) window.pop_front();
        if (window.size() == 10) {
          const double avg = std::accumulate(window.begin(), window.end(), 0.0) / 10.0;
          if (avg > previous_average && sinks.warnings) {
            *sinks.warnings << "warning: 10-step moving average loss rose to " << avg << " at step " << step << '\n';
          }
          previous_average = avg;
        }
      }
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches, 1));
    sum.total *= inv;
    for (auto& t : sum.terms) {
      if (t) *t *= inv;
    }
    if (sum.trimodal) *sum.trimodal *= inv;

    EpochLog entry;
    entry.epoch = epoch;
    entry.step = step;
    entry.mean_loss = sum;
    entry.val_i2a_r10 = validation_r10(model, val_data);
    if (!have_best || entry.val_i2a_r10 > result.best.val_i2a_r10) {
      entry.best = true;
      have_best = true;
      result.best = snapshot(epoch, step, entry.val_i2a_r10);
    }
    entry.wall_time_s = elapsed();
    result.log.push_back(entry);
    emit(sinks, entry);
  }
  if (!have_best) result.best = snapshot(0, 0, baseline.val_i2a_r10);
  result.final_model = model;
  return result;
}

}  // namespace s2s
