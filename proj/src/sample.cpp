#include "s2s/sample.hpp"

#include "s2s/error.hpp"

namespace s2s {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::audio_caption: return "audio_caption";
    case Modality::image: return "image";
    case Modality::image_caption: return "image_caption";
  }
  return "?";
}

std::size_t meta_component_index(std::string_view name) {
  for (std::size_t k = 0; k < kMetaComponents; ++k) {
    if (kMetaComponentNames[k] == name) return k;
  }
  throw UsageError("unknown metadata component: " + std::string(name));
}

MetaFlags parse_meta_mask(std::string_view bits) {
  if (bits.size() != kMetaComponents) {
    throw UsageError("metadata mask must have exactly 5 characters of 0/1");
  }
  MetaFlags out{};
  for (std::size_t k = 0; k < kMetaComponents; ++k) {
    if (bits[k] != '0' && bits[k] != '1') {
      throw UsageError("metadata mask must have exactly 5 characters of 0/1");
    }
    out[k] = bits[k] == '1';
  }
  return out;
}

std::string format_meta_mask(const MetaFlags& flags) {
  std::string s;
  for (bool b : flags) s.push_back(b ? '1' : '0');
  return s;
}

}  // namespace s2s
