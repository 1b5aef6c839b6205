#pragma once

// Analytic similarity-computation cost per text-video pair, counted as
// multiply-accumulates with the rerank stage amortized over the gallery.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace eercf::flops {

struct CostModelInput {
  std::uint64_t gallery_size = 1;  // N
  std::uint64_t frames = 1;        // N_v (frames or segments per video)
  std::uint64_t words = 1;         // N_t
  std::uint64_t patches = 1;       // N_p, patches per video
  std::uint64_t candidates = 1;    // N_r
  std::uint64_t dim = 512;         // D
};

enum class MethodKind {
  SingleVector,     // one vector per side
  SegmentVector,    // text against N_v segment/frame vectors
  CrossGrained,     // sentence/word x video/frame
  WordFrame,        // word-frame token interaction with per-token weights
  PooledAttention,  // text-conditioned frame pooling + D x D projection
  TwoStage,         // coarse recall + TIB rerank of N_r candidates
};

std::string_view to_string(MethodKind kind);
std::optional<MethodKind> parse_method(std::string_view name);
std::string_view formula(MethodKind kind);

/// Throws InvalidParams when a field the kind uses is zero or N_r > N.
double flops_per_pair(MethodKind kind, const CostModelInput& input);

struct Entry {
  std::string label;
  MethodKind kind;
  CostModelInput input;
};

struct Row {
  std::string label;
  MethodKind kind;
  std::string formula;
  double macs = 0.0;
  double ratio = 1.0;  // to the cheapest entry
};

/// Rows sorted by ascending cost (stable for equal costs).
std::vector<Row> flops_table(const std::vector<Entry>& entries);

/// Benchmark configurations: msrvtt1k, msrvtt3k, vatex, activitynet.
std::vector<Entry> preset(std::string_view name);
std::vector<std::string> preset_names();

/// "16.0k"-style rendering used by the reported tables.
std::string format_k(double macs);

nlohmann::json table_to_json(const std::vector<Row>& rows);
std::string table_to_text(const std::vector<Row>& rows);

}  // namespace eercf::flops
