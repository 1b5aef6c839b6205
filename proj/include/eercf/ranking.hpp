#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "eercf/embedding_store.hpp"
#include "eercf/tib.hpp"
#include "json.hpp"

namespace eercf {

/// Weights applied to the coarse, text-frame and text-patch similarities.
struct FusionWeights {
  double coarse = 5.0 / 11.0;
  double frame = 5.0 / 11.0;
  double patch = 1.0 / 11.0;

  /// Scaled to sum to one. Throws InvalidParams when negative or all zero.
  FusionWeights normalized() const;
};

struct SearchConfig {
  std::size_t top_k = 50;
  FusionWeights weights;
  TibConfig tib;

  void validate() const;
};

enum class Stage { Recall, Final };

struct RankedEntry {
  std::size_t index = 0;  // gallery position
  std::string video_id;
  double score = 0.0;
};

/// Scores are non-increasing; ties are ordered by ascending gallery position.
struct RankedList {
  Stage stage = Stage::Recall;
  std::vector<RankedEntry> entries;

  std::size_t size() const { return entries.size(); }
};

struct SimilarityBreakdown {
  double coarse = 0.0;
  double frame = 0.0;
  double patch = 0.0;
  double fused = 0.0;
};

/// Per-video fused similarity; `text` must be unit norm.
SimilarityBreakdown fused_similarity(const VideoRecord& video, const Eigen::VectorXf& text,
                                     const SearchConfig& config);

/// Top-k of the gallery by coarse (mean-pooled) cosine similarity.
RankedList recall_topk(const Eigen::VectorXf& text, const Gallery& gallery, std::size_t k);

/// Rescores `candidates` by the fused similarity and re-sorts them.
RankedList rerank(const Eigen::VectorXf& text, const RankedList& candidates, const Gallery& gallery,
                  const SearchConfig& config);

/// Recall then rerank; the final list holds min(top_k, N) videos.
RankedList search(const Eigen::VectorXf& text, const Gallery& gallery, const SearchConfig& config);

struct Metrics {
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  double mean = 0.0;
  std::size_t queries = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// One query with its relevant gallery videos.
struct Query {
  const TextRecord* text = nullptr;
  std::vector<std::string> relevant;
};

/// Groups manifest pairs by text in text-file order; texts without pairs are
/// skipped. Throws MissingGroundTruth on dangling ids or an empty result.
std::vector<Query> build_queries(std::span<const TextRecord> texts, const Gallery& gallery,
                                 std::span<const RelevancePair> pairs);

/// Runs `search` for every query on up to `threads` workers. Output order
/// matches query order.
std::vector<RankedList> search_all(std::span<const Query> queries, const Gallery& gallery,
                                   const SearchConfig& config, std::size_t threads);

/// R@1/5/10 over final lists. A relevant video beyond the list length counts
/// as a miss.
Metrics metrics_from_lists(std::span<const Query> queries, std::span<const RankedList> lists);

/// Text-to-video evaluation of the two-stage pipeline.
Metrics evaluate(std::span<const TextRecord> texts, std::span<const RelevancePair> pairs,
                 const Gallery& gallery, const SearchConfig& config, std::size_t threads = 1);

/// Video-to-text direction: each video with at least one caption ranks all
/// texts, recalling by coarse similarity and reranking with the same fused
/// score (the TIB vectors stay conditioned on each candidate text).
Metrics evaluate_video_to_text(std::span<const TextRecord> texts,
                               std::span<const RelevancePair> pairs, const Gallery& gallery,
                               const SearchConfig& config, std::size_t threads = 1);

nlohmann::json ranked_list_to_json(const std::string& text_id, const RankedList& list);
nlohmann::json metrics_to_json(const Metrics& metrics);

}  // namespace eercf
