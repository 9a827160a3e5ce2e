#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/rng.hpp"
#include "s2s/sample.hpp"

namespace s2s {

inline constexpr const char* kMetaExtension = ".s2s-meta";
inline constexpr const char* kDataExtension = ".s2s-data";

struct GeneratorSpec {
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 256;
  std::size_t k_true = 8;              // latent ground-truth concepts
  std::size_t concepts_min = 1;        // active concepts per sample
  std::size_t concepts_max = 3;
  std::size_t d_latent = 8;
  std::size_t audio_tokens = 6;
  std::size_t audio_dim = 12;
  std::size_t image_patches = 16;
  std::size_t image_dim = 12;
  double noise_sigma = 0.1;
  std::size_t vocab_size = 12;         // ids < k_true name concepts, the rest are filler
  std::size_t max_filler = 2;
  std::size_t n_audio_sources = 4;
  double source_bias_sigma = 1.5;   // length of each source's signature shift
  double audio_concept_keep = 0.7;     // chance an active concept is audible
  std::size_t grid_rows = 0;           // 0 = no map grid split
  std::size_t grid_cols = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json generator_spec_to_json(const GeneratorSpec& s);
// Closed key set: unknown keys are rejected, missing keys keep defaults.
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

struct DatasetHeader {
  std::string split;
  std::size_t n_records = 0;
  std::size_t audio_dim = 0;
  std::size_t image_dim = 0;
  std::size_t vocab_size = 0;
  std::size_t n_audio_sources = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  nlohmann::json generator;            // spec that produced the split, if any

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<RawSample> records;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Ground-truth structure shared by every split of one seed.
struct SyntheticWorld {
  std::vector<std::vector<double>> concepts;   // k_true x d_latent
  std::vector<std::vector<double>> audio_view; // audio_dim x d_latent
  std::vector<std::vector<double>> image_view; // image_dim x d_latent
  std::vector<std::vector<double>> source_bias;
};

SyntheticWorld make_world(const GeneratorSpec& spec);

/// One sample whose active concepts are given explicitly. Image patches
/// cycle through the concepts so each one owns at least one patch.
RawSample synthesize_sample(const SyntheticWorld& world, const GeneratorSpec& spec, Rng& rng,
                            std::string id, const std::vector<int>& active);

struct GeneratedData {
  Dataset train;
  Dataset val;
  Dataset test;
  std::optional<Dataset> grid;
};

GeneratedData generate(const GeneratorSpec& spec);

/// Accepts "dir/name", "dir/name.s2s-meta" or "dir/name.s2s-data".
std::filesystem::path dataset_prefix(const std::filesystem::path& path);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct ValidationIssue {
  std::size_t record = 0;        // 0-based record number
  std::size_t byte_offset = 0;   // start of the record line in the data file
  std::string message;
};

struct ValidationReport {
  std::size_t records_checked = 0;
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

ValidationReport validate_dataset(const std::filesystem::path& path);

// Record (de)serialization, one structured-text object per line.
std::string serialize_record(const RawSample& s);
RawSample parse_record(std::string_view line);
// Empty string when the record agrees with the header.
std::string check_record(const RawSample& s, const DatasetHeader& h);

}  // namespace s2s
