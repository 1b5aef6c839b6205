#include "eercf/flops.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "eercf/error.hpp"

namespace eercf::flops {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

double d(std::uint64_t v) { return static_cast<double>(v); }

struct PresetShape {
  const char* name;
  std::uint64_t gallery_size, frames, words, patches_per_frame;
};

// Text-side token budgets (32 words, 12 frames; 64/64 for paragraph-level
// retrieval) and ViT-B/32 grids of 7 x 7 = 49 patches per frame.
constexpr PresetShape kPresets[] = {
    {"msrvtt1k", 1000, 12, 32, 49},
    {"msrvtt3k", 2990, 12, 32, 49},
    {"vatex", 1500, 12, 32, 49},
    {"activitynet", 4917, 64, 64, 49},
};

}  // namespace

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::SingleVector: return "single";
    case MethodKind::SegmentVector: return "segment";
    case MethodKind::CrossGrained: return "cross";
    case MethodKind::WordFrame: return "wordframe";
    case MethodKind::PooledAttention: return "pooled";
    case MethodKind::TwoStage: return "twostage";
  }
  return "unknown";
}

std::optional<MethodKind> parse_method(std::string_view name) {
  for (auto k : {MethodKind::SingleVector, MethodKind::SegmentVector, MethodKind::CrossGrained,
                 MethodKind::WordFrame, MethodKind::PooledAttention, MethodKind::TwoStage}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view formula(MethodKind kind) {
  switch (kind) {
    case MethodKind::SingleVector: return "D";
    case MethodKind::SegmentVector: return "Nv*D";
    case MethodKind::CrossGrained: return "(1+Nv*Nt+Nv+Nt)*D";
    case MethodKind::WordFrame: return "(Nv*Nt+Nv+Nt)*D";
    case MethodKind::PooledAttention: return "(Nv+D)*D";
    case MethodKind::TwoStage: return "D+Nr*(1+Nv+Np)*D/N";
  }
  return "";
}

double flops_per_pair(MethodKind kind, const CostModelInput& in) {
  require(in.dim > 0, "D must be positive");
  switch (kind) {
    case MethodKind::SingleVector:
      return d(in.dim);
    case MethodKind::SegmentVector:
      require(in.frames > 0, "N_v must be positive");
      return d(in.frames) * d(in.dim);
    case MethodKind::CrossGrained:
      require(in.frames > 0 && in.words > 0, "N_v and N_t must be positive");
      return (1.0 + d(in.frames) * d(in.words) + d(in.frames) + d(in.words)) * d(in.dim);
    case MethodKind::WordFrame:
      require(in.frames > 0 && in.words > 0, "N_v and N_t must be positive");
      return (d(in.frames) * d(in.words) + d(in.frames) + d(in.words)) * d(in.dim);
    case MethodKind::PooledAttention:
      require(in.frames > 0, "N_v must be positive");
      return (d(in.frames) + d(in.dim)) * d(in.dim);
    case MethodKind::TwoStage:
      require(in.gallery_size > 0 && in.frames > 0 && in.patches > 0 && in.candidates > 0,
              "N, N_v, N_p and N_r must be positive");
      require(in.candidates <= in.gallery_size, "N_r must not exceed N");
      return d(in.dim) +
             d(in.candidates) * (1.0 + d(in.frames) + d(in.patches)) * d(in.dim) / d(in.gallery_size);
  }
  throw Error(ErrorCode::InvalidParams, "unknown method kind");
}

std::vector<Row> flops_table(const std::vector<Entry>& entries) {
  std::vector<Row> rows;
  rows.reserve(entries.size());
  for (const auto& e : entries) {
    rows.push_back({e.label, e.kind, std::string(formula(e.kind)), flops_per_pair(e.kind, e.input), 1.0});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.macs < b.macs; });
  if (!rows.empty()) {
    const double cheapest = rows.front().macs;
    for (auto& r : rows) r.ratio = r.macs / cheapest;
  }
  return rows;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

std::vector<Entry> preset(std::string_view name) {
  const auto it = std::find_if(std::begin(kPresets), std::end(kPresets),
                               [&](const PresetShape& p) { return name == p.name; });
  if (it == std::end(kPresets)) {
    throw Error(ErrorCode::InvalidParams, "unknown preset '" + std::string(name) + "'");
  }
  CostModelInput in;
  in.gallery_size = it->gallery_size;
  in.frames = it->frames;
  in.words = it->words;
  in.patches = it->frames * it->patches_per_frame;
  in.candidates = 50;
  in.dim = 512;

  CostModelInput center = in;
  center.frames = 3;  // CenterCLIP scores against 3 segment centers

  return {
      {"CLIP4Clip", MethodKind::SingleVector, in},
      {"CLIP-VIP", MethodKind::SingleVector, in},
      {"CenterCLIP", MethodKind::SegmentVector, center},
      {"TS2-Net", MethodKind::SegmentVector, in},
      {"X-CLIP", MethodKind::CrossGrained, in},
      {"DRL", MethodKind::WordFrame, in},
      {"X-Pool", MethodKind::PooledAttention, in},
      {"EERCF", MethodKind::TwoStage, in},
  };
}

std::string format_k(double macs) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1fk", macs / 1000.0);
  return buf;
}

nlohmann::json table_to_json(const std::vector<Row>& rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.label},
                   {"method", std::string(to_string(r.kind))},
                   {"formula", r.formula},
                   {"macs", r.macs},
                   {"display", format_k(r.macs)},
                   {"ratio", r.ratio}});
  }
  return out;
}

std::string table_to_text(const std::vector<Row>& rows) {
  std::size_t label_w = 6, formula_w = 7;
  for (const auto& r : rows) {
    label_w = std::max(label_w, r.label.size());
    formula_w = std::max(formula_w, r.formula.size());
  }
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %-*s  %14s  %9s  %8s\n", static_cast<int>(label_w), "Method",
                static_cast<int>(formula_w), "Formula", "MACs/pair", "FLOPs", "Ratio");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-*s  %-*s  %14.1f  %9s  %7.2fx\n", static_cast<int>(label_w),
                  r.label.c_str(), static_cast<int>(formula_w), r.formula.c_str(), r.macs,
                  format_k(r.macs).c_str(), r.ratio);
    os << line;
  }
  return os.str();
}

}  // namespace eercf::flops
