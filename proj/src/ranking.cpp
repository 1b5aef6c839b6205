#include "eercf/ranking.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "eercf/parallel.hpp"

namespace eercf {

namespace {

bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

void check_query(const Eigen::VectorXf& text, const Gallery& gallery) {
  if (gallery.empty()) throw Error(ErrorCode::EmptyGallery, "search over an empty gallery");
  if (text.size() != gallery.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "query dimension " + std::to_string(text.size()) +
                                              " differs from gallery dimension " +
                                              std::to_string(gallery.dim()));
  }
  if (!all_finite(text)) throw Error(ErrorCode::NonFinite, "query is not finite");
}

double dot(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  return a.cast<double>().dot(b.cast<double>());
}

}  // namespace

FusionWeights FusionWeights::normalized() const {
  if (!(coarse >= 0.0) || !(frame >= 0.0) || !(patch >= 0.0) || !std::isfinite(coarse) ||
      !std::isfinite(frame) || !std::isfinite(patch)) {
    throw Error(ErrorCode::InvalidParams, "fusion weights must be finite and nonnegative");
  }
  const double sum = coarse + frame + patch;
  if (!(sum > 0.0)) throw Error(ErrorCode::InvalidParams, "fusion weights are all zero");
  return {coarse / sum, frame / sum, patch / sum};
}

void SearchConfig::validate() const {
  if (top_k < 1) throw Error(ErrorCode::InvalidParams, "top_k must be at least 1");
  (void)weights.normalized();
  tib.validate();
}

SimilarityBreakdown fused_similarity(const VideoRecord& video, const Eigen::VectorXf& text,
                                     const SearchConfig& config) {
  const FusionWeights w = config.weights.normalized();
  SimilarityBreakdown s;
  s.coarse = dot(video.coarse, text);
  // Zero-weighted levels are skipped; their similarity is reported as 0.
  if (w.frame > 0.0) s.frame = dot(text_frame_feature(video, text, config.tib), text);
  if (w.patch > 0.0) s.patch = dot(text_patch_feature(video, text, config.tib), text);
  s.fused = w.coarse * s.coarse + w.frame * s.frame + w.patch * s.patch;
  return s;
}

RankedList recall_topk(const Eigen::VectorXf& text, const Gallery& gallery, std::size_t k) {
  check_query(text, gallery);
  if (k < 1) throw Error(ErrorCode::InvalidParams, "k must be at least 1");
  const Eigen::VectorXd scores = gallery.coarse_matrix().cast<double>() * text.cast<double>();

  std::vector<RankedEntry> all(gallery.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = {i, {}, scores[static_cast<Eigen::Index>(i)]};
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
  all.resize(keep);
  for (auto& e : all) e.video_id = gallery[e.index].id;
  return {Stage::Recall, std::move(all)};
}

RankedList rerank(const Eigen::VectorXf& text, const RankedList& candidates, const Gallery& gallery,
                  const SearchConfig& config) {
  check_query(text, gallery);
  config.tib.validate();
  RankedList out{Stage::Final, {}};
  out.entries.reserve(candidates.size());
  for (const auto& c : candidates.entries) {
    const auto pos = gallery.find(c.video_id);
    if (!pos) throw Error(ErrorCode::UnknownId, "candidate '" + c.video_id + "' not in gallery");
    out.entries.push_back({*pos, c.video_id, fused_similarity(gallery[*pos], text, config).fused});
  }
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  return out;
}

RankedList search(const Eigen::VectorXf& text, const Gallery& gallery, const SearchConfig& config) {
  config.validate();
  return rerank(text, recall_topk(text, gallery, config.top_k), gallery, config);
}

std::vector<Query> build_queries(std::span<const TextRecord> texts, const Gallery& gallery,
                                 std::span<const RelevancePair> pairs) {
  std::unordered_map<std::string, std::size_t> text_pos;
  for (std::size_t i = 0; i < texts.size(); ++i) text_pos.emplace(texts[i].id, i);

  std::vector<std::vector<std::string>> relevant(texts.size());
  for (const auto& p : pairs) {
    const auto it = text_pos.find(p.text_id);
    if (it == text_pos.end()) {
      throw Error(ErrorCode::MissingGroundTruth, "ground-truth text '" + p.text_id + "' not found");
    }
    if (!gallery.find(p.video_id)) {
      throw Error(ErrorCode::MissingGroundTruth, "ground-truth video '" + p.video_id + "' not found");
    }
    relevant[it->second].push_back(p.video_id);
  }
  std::vector<Query> queries;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!relevant[i].empty()) queries.push_back({&texts[i], std::move(relevant[i])});
  }
  if (queries.empty()) throw Error(ErrorCode::MissingGroundTruth, "no query has ground truth");
  return queries;
}

std::vector<RankedList> search_all(std::span<const Query> queries, const Gallery& gallery,
                                   const SearchConfig& config, std::size_t threads) {
  config.validate();
  std::vector<RankedList> lists(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    lists[i] = search(queries[i].text->feature, gallery, config);
  });
  return lists;
}

namespace {

// Hit counts at cutoffs 1, 5, 10 for one ranked list of ids.
template <typename IdAt>
void count_hits(std::size_t list_size, IdAt id_at, const std::vector<std::string>& relevant,
                std::array<std::size_t, 3>& hits) {
  constexpr std::array<std::size_t, 3> cutoffs{1, 5, 10};
  std::size_t first = list_size;
  for (std::size_t r = 0; r < list_size && first == list_size; ++r) {
    if (std::find(relevant.begin(), relevant.end(), id_at(r)) != relevant.end()) first = r;
  }
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    if (first < cutoffs[c]) ++hits[c];
  }
}

Metrics finish_metrics(const std::array<std::size_t, 3>& hits, std::size_t n) {
  Metrics m;
  m.queries = n;
  auto percent = [n](std::size_t h) { return n == 0 ? 0.0 : 100.0 * static_cast<double>(h) / static_cast<double>(n); };
  m.r_at_1 = percent(hits[0]);
  m.r_at_5 = percent(hits[1]);
  m.r_at_10 = percent(hits[2]);
  m.mean = (m.r_at_1 + m.r_at_5 + m.r_at_10) / 3.0;
  return m;
}

}  // namespace

Metrics metrics_from_lists(std::span<const Query> queries, std::span<const RankedList> lists) {
  if (queries.size() != lists.size()) {
    throw Error(ErrorCode::ShapeMismatch, "query and ranked-list counts differ");
  }
  std::array<std::size_t, 3> hits{};
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& list = lists[q];
    count_hits(list.size(), [&](std::size_t r) -> const std::string& { return list.entries[r].video_id; },
               queries[q].relevant, hits);
  }
  return finish_metrics(hits, queries.size());
}

Metrics evaluate(std::span<const TextRecord> texts, std::span<const RelevancePair> pairs,
                 const Gallery& gallery, const SearchConfig& config, std::size_t threads) {
  const auto queries = build_queries(texts, gallery, pairs);
  const auto lists = search_all(queries, gallery, config, threads);
  return metrics_from_lists(queries, lists);
}

Metrics evaluate_video_to_text(std::span<const TextRecord> texts,
                               std::span<const RelevancePair> pairs, const Gallery& gallery,
                               const SearchConfig& config, std::size_t threads) {
  config.validate();
  if (texts.empty()) throw Error(ErrorCode::MissingGroundTruth, "no texts to rank");
  // Validates ids; the transposed pairing is built below.
  (void)build_queries(texts, gallery, pairs);

  std::vector<std::vector<std::string>> captions(gallery.size());
  for (const auto& p : pairs) captions[*gallery.find(p.video_id)].push_back(p.text_id);
  std::vector<std::size_t> videos;
  for (std::size_t v = 0; v < gallery.size(); ++v) {
    if (!captions[v].empty()) videos.push_back(v);
  }

  RowMatrix<double> text_matrix(static_cast<Eigen::Index>(texts.size()), gallery.dim());
  for (std::size_t t = 0; t < texts.size(); ++t) {
    if (texts[t].feature.size() != gallery.dim()) {
      throw Error(ErrorCode::ShapeMismatch, "text '" + texts[t].id + "' dimension differs from gallery");
    }
    text_matrix.row(static_cast<Eigen::Index>(t)) = texts[t].feature.cast<double>().transpose();
  }

  std::vector<std::vector<std::string>> ranked(videos.size());
  parallel_for(videos.size(), threads, [&](std::size_t i) {
    const VideoRecord& video = gallery[videos[i]];
    const Eigen::VectorXd coarse = text_matrix * video.coarse.cast<double>();
    std::vector<RankedEntry> order(texts.size());
    for (std::size_t t = 0; t < texts.size(); ++t) order[t] = {t, {}, coarse[static_cast<Eigen::Index>(t)]};
    const std::size_t keep = std::min(config.top_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      ranks_before);
    order.resize(keep);
    for (auto& e : order) e.score = fused_similarity(video, texts[e.index].feature, config).fused;
    std::sort(order.begin(), order.end(), ranks_before);
    for (const auto& e : order) ranked[i].push_back(texts[e.index].id);
  });

  std::array<std::size_t, 3> hits{};
  for (std::size_t i = 0; i < videos.size(); ++i) {
    count_hits(ranked[i].size(), [&](std::size_t r) -> const std::string& { return ranked[i][r]; },
               captions[videos[i]], hits);
  }
  return finish_metrics(hits, videos.size());
}

nlohmann::json ranked_list_to_json(const std::string& text_id, const RankedList& list) {
  auto ranking = nlohmann::json::array();
  for (const auto& e : list.entries) ranking.push_back({{"video_id", e.video_id}, {"score", e.score}});
  return {{"text_id", text_id}, {"ranking", std::move(ranking)}};
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"r_at_1", m.r_at_1}, {"r_at_5", m.r_at_5}, {"r_at_10", m.r_at_10},
          {"mean", m.mean},     {"queries", m.queries}};
}

}  // namespace eercf
