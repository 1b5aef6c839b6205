#pragma once

// Synthetic multi-granularity galleries with planted relevance, and a naive
// scorer used as the ranking oracle. The oracle shares no code with ranking.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eercf/embedding_store.hpp"
#include "eercf/ranking.hpp"
#include "json.hpp"

namespace eercf::testkit {

enum class DistractorMode {
  None,              // videos are noisy copies of their concept
  CoarseConfusable,  // each target has a distractor built to win on the mean
  PatchNoise,        // clustered concepts plus spurious clean frames of other concepts
};

std::string_view to_string(DistractorMode mode);
std::optional<DistractorMode> parse_mode(std::string_view name);

struct SynthConfig {
  std::size_t videos = 100;
  std::size_t queries = 100;
  std::size_t dim = 64;
  std::size_t frames = 8;
  std::size_t patches_per_frame = 4;
  std::uint64_t seed = 1;
  double noise = 0.0;  // norm of the Gaussian perturbation added to each query concept
  DistractorMode mode = DistractorMode::None;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Videos sharing a concept cluster in PatchNoise mode.
inline constexpr std::size_t kClusterSize = 64;

struct SynthData {
  std::vector<VideoRecord> videos;  // raw, not yet finalized
  std::vector<TextRecord> texts;
  Manifest manifest;

  Gallery gallery() const { return Gallery(videos); }
};

/// Deterministic for a fixed config. manifest.pairs[j] names the target of query j.
SynthData generate(const SynthConfig& config);

/// Fused score of every gallery video, recomputed with plain loops in double
/// from the raw frame and patch rows, then fully sorted (score descending,
/// gallery position ascending).
RankedList brute_force_rank(const TextRecord& text, const Gallery& gallery, const SearchConfig& config);

/// Independent hit counter over final lists: one pass per cutoff.
Metrics oracle_metrics(const std::vector<std::vector<std::string>>& ranked_ids,
                       const std::vector<std::string>& ground_truth);

}  // namespace eercf::testkit
