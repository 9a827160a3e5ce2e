#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

enum class Modality { audio, audio_caption, image, image_caption };

inline constexpr std::array<Modality, 4> kModalities = {
    Modality::audio, Modality::audio_caption, Modality::image, Modality::image_caption};

std::string_view modality_name(Modality m);

// Metadata components in row order of the embedded metadata block.
enum MetaComponent : std::size_t {
  kLocation = 0,
  kMonth = 1,
  kHour = 2,
  kAudioSource = 3,
  kCaptionSource = 4,
};
inline constexpr std::size_t kMetaComponents = 5;
inline constexpr std::array<std::string_view, kMetaComponents> kMetaComponentNames = {
    "location", "month", "hour", "audio_source", "caption_source"};

// One flag per metadata component.
using MetaFlags = std::array<bool, kMetaComponents>;
inline constexpr MetaFlags kAllMeta = {true, true, true, true, true};
inline constexpr MetaFlags kNoMeta = {false, false, false, false, false};

std::size_t meta_component_index(std::string_view name);

// Parses a 5-char bitmask such as "11101" ('1' = component present).
MetaFlags parse_meta_mask(std::string_view bits);
std::string format_meta_mask(const MetaFlags& flags);

struct MetadataRecord {
  double lat = 0.0;
  double lon = 0.0;
  int month = 1;
  int hour = 0;
  int audio_source = 0;
  int caption_source = 0;

  friend bool operator==(const MetadataRecord&, const MetadataRecord&) = default;
};

// Generator labels carried alongside a record; empty for external data.
struct GroundTruth {
  std::vector<int> concepts;
  std::vector<int> audio_concepts;
  std::vector<int> patch_concepts;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct RawSample {
  std::string id;
  Tensor audio_tokens;              // N^a x D_a
  std::vector<int> audio_caption_ids;
  Tensor image_patches;             // N^i x D_i
  std::vector<int> image_caption_ids;
  MetadataRecord metadata;
  int scale = 1;                    // 1, 3 or 5
  GroundTruth truth;

  friend bool operator==(const RawSample&, const RawSample&) = default;
};

}  // namespace s2s
