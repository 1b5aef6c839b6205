#include "eercf/testkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "eercf/error.hpp"
#include "eercf/random.hpp"

namespace eercf::testkit {

namespace {

// Perturbation scales, as norms relative to a unit concept vector.
constexpr double kNoneFrameNoise = 0.3;
constexpr double kNonePatchNoise = 0.3;
constexpr double kMatchNoise = 0.1;
constexpr double kBackground = 1.0;
constexpr double kClusterSpread = 1.0;
constexpr double kHeavyFrameNoise = 3.0;
constexpr double kSpuriousNoise = 0.3;

class Builder {
 public:
  Builder(const SynthConfig& c) : c_(c), rng_(c.seed), dim_(static_cast<Eigen::Index>(c.dim)) {}

  Eigen::VectorXd unit() {
    Eigen::VectorXd v = rng_.normal_vector(dim_);
    return v / v.norm();
  }
  // Isotropic Gaussian with expected norm ~ `scale`.
  Eigen::VectorXd gauss(double scale) {
    return rng_.normal_vector(dim_, scale / std::sqrt(static_cast<double>(dim_)));
  }

  VideoRecord empty_video(std::size_t i) {
    VideoRecord v;
    char id[32];
    std::snprintf(id, sizeof(id), "video%05zu", i);
    v.id = id;
    v.patches_per_frame = static_cast<Eigen::Index>(c_.patches_per_frame);
    v.frames.resize(static_cast<Eigen::Index>(c_.frames), dim_);
    v.patches.resize(static_cast<Eigen::Index>(c_.frames * c_.patches_per_frame), dim_);
    return v;
  }

  static void set_row(FeatureMatrix& m, Eigen::Index r, const Eigen::VectorXd& v) {
    m.row(r) = v.cast<float>().transpose();
  }

  Rng& rng() { return rng_; }
  Eigen::Index frames() const { return static_cast<Eigen::Index>(c_.frames); }
  Eigen::Index per_frame() const { return static_cast<Eigen::Index>(c_.patches_per_frame); }

 private:
  const SynthConfig& c_;
  Rng rng_;
  Eigen::Index dim_;
};

struct Planted {
  std::vector<VideoRecord> videos;
  std::vector<Eigen::VectorXd> query_concepts;  // per query
  std::vector<std::size_t> targets;             // per query
};

Planted plant_none(const SynthConfig& c, Builder& b) {
  Planted out;
  std::vector<Eigen::VectorXd> concepts;
  for (std::size_t i = 0; i < c.videos; ++i) {
    concepts.push_back(b.unit());
    VideoRecord v = b.empty_video(i);
    for (Eigen::Index t = 0; t < b.frames(); ++t) {
      const Eigen::VectorXd content = concepts[i] + b.gauss(kNoneFrameNoise);
      Builder::set_row(v.frames, t, content);
      for (Eigen::Index p = 0; p < b.per_frame(); ++p) {
        Builder::set_row(v.patches, t * b.per_frame() + p, content + b.gauss(kNonePatchNoise));
      }
    }
    out.videos.push_back(std::move(v));
  }
  for (std::size_t j = 0; j < c.queries; ++j) {
    out.targets.push_back(j % c.videos);
    out.query_concepts.push_back(concepts[j % c.videos]);
  }
  return out;
}

// Pair p: target 2p holds one clean frame (and one clean patch) of concept
// q_p among background frames; distractor 2p+1 mixes q_p weakly into every
// frame so its mean is closer to q_p than the target's mean.
Planted plant_coarse_confusable(const SynthConfig& c, Builder& b) {
  Planted out;
  const std::size_t pairs = c.videos / 2;
  const double t = static_cast<double>(c.frames);
  const double distractor_cos = std::min(0.9, 1.5 / std::sqrt(t));
  const double mix = std::sqrt(distractor_cos * distractor_cos / (1.0 - distractor_cos * distractor_cos) / t);

  std::vector<Eigen::VectorXd> concepts;
  for (std::size_t p = 0; p < pairs; ++p) {
    const Eigen::VectorXd q = b.unit();
    concepts.push_back(q);

    VideoRecord target = b.empty_video(2 * p);
    const auto match = static_cast<Eigen::Index>(b.rng().below(c.frames));
    const auto match_patch = static_cast<Eigen::Index>(b.rng().below(c.patches_per_frame));
    for (Eigen::Index f = 0; f < b.frames(); ++f) {
      Builder::set_row(target.frames, f, f == match ? Eigen::VectorXd(q + b.gauss(kMatchNoise)) : b.gauss(kBackground));
      for (Eigen::Index k = 0; k < b.per_frame(); ++k) {
        const bool clean = f == match && k == match_patch;
        Builder::set_row(target.patches, f * b.per_frame() + k,
                         clean ? Eigen::VectorXd(q + b.gauss(kMatchNoise)) : b.gauss(kBackground));
      }
    }

    VideoRecord distractor = b.empty_video(2 * p + 1);
    for (Eigen::Index f = 0; f < b.frames(); ++f) {
      Builder::set_row(distractor.frames, f, mix * q + b.gauss(kBackground));
      for (Eigen::Index k = 0; k < b.per_frame(); ++k) {
        Builder::set_row(distractor.patches, f * b.per_frame() + k, mix * q + b.gauss(kBackground));
      }
    }
    out.videos.push_back(std::move(target));
    out.videos.push_back(std::move(distractor));
  }
  if (c.videos % 2 == 1) {
    VideoRecord filler = b.empty_video(c.videos - 1);
    for (Eigen::Index f = 0; f < b.frames(); ++f) Builder::set_row(filler.frames, f, b.gauss(kBackground));
    for (Eigen::Index r = 0; r < filler.patches.rows(); ++r) Builder::set_row(filler.patches, r, b.gauss(kBackground));
    out.videos.push_back(std::move(filler));
  }
  for (std::size_t j = 0; j < c.queries; ++j) {
    out.targets.push_back(2 * (j % pairs));
    out.query_concepts.push_back(concepts[j % pairs]);
  }
  return out;
}

// Concepts cluster in groups of kClusterSize. Every regular frame is its
// concept under heavy noise; one frame per video is a clean copy of a concept
// from another cluster (a spurious local detail).
Planted plant_patch_noise(const SynthConfig& c, Builder& b) {
  Planted out;
  const std::size_t clusters = (c.videos + kClusterSize - 1) / kClusterSize;
  std::vector<Eigen::VectorXd> centers;
  for (std::size_t k = 0; k < clusters; ++k) centers.push_back(b.unit());
  std::vector<Eigen::VectorXd> concepts;
  for (std::size_t i = 0; i < c.videos; ++i) {
    Eigen::VectorXd v = centers[i / kClusterSize] + b.gauss(kClusterSpread);
    concepts.push_back(v / v.norm());
  }
  for (std::size_t i = 0; i < c.videos; ++i) {
    std::size_t source = i;
    while (source == i || (clusters > 1 && source / kClusterSize == i / kClusterSize)) {
      source = b.rng().below(c.videos);
    }
    const auto spurious = static_cast<Eigen::Index>(b.rng().below(c.frames));
    VideoRecord v = b.empty_video(i);
    for (Eigen::Index f = 0; f < b.frames(); ++f) {
      const bool is_spurious = f == spurious;
      const Eigen::VectorXd& content = is_spurious ? concepts[source] : concepts[i];
      const double noise = is_spurious ? kMatchNoise : kHeavyFrameNoise;
      Builder::set_row(v.frames, f, content + b.gauss(noise));
      for (Eigen::Index k = 0; k < b.per_frame(); ++k) {
        Builder::set_row(v.patches, f * b.per_frame() + k,
                         content + b.gauss(is_spurious ? kSpuriousNoise : kHeavyFrameNoise));
      }
    }
    out.videos.push_back(std::move(v));
  }
  for (std::size_t j = 0; j < c.queries; ++j) {
    out.targets.push_back(j % c.videos);
    out.query_concepts.push_back(concepts[j % c.videos]);
  }
  return out;
}

}  // namespace

std::string_view to_string(DistractorMode mode) {
  switch (mode) {
    case DistractorMode::None: return "none";
    case DistractorMode::CoarseConfusable: return "coarse-confusable";
    case DistractorMode::PatchNoise: return "patch-noise";
  }
  return "unknown";
}

std::optional<DistractorMode> parse_mode(std::string_view name) {
  for (auto m : {DistractorMode::None, DistractorMode::CoarseConfusable, DistractorMode::PatchNoise}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void SynthConfig::validate() const {
  if (videos < 1 || queries < 1 || dim < 1 || frames < 1 || patches_per_frame < 1) {
    throw Error(ErrorCode::InvalidConfig, "all synthetic counts must be at least 1");
  }
  if (frames > 65535 || patches_per_frame > 65535 || dim > 0xFFFFFFFFull) {
    throw Error(ErrorCode::InvalidConfig, "shape exceeds the container limits");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(ErrorCode::InvalidConfig, "noise must be >= 0");
  if (mode == DistractorMode::CoarseConfusable && (videos < 2 || frames < 2)) {
    throw Error(ErrorCode::InvalidConfig, "coarse-confusable mode needs >= 2 videos and >= 2 frames");
  }
  if (mode == DistractorMode::PatchNoise && (videos < 2 || frames < 2)) {
    throw Error(ErrorCode::InvalidConfig, "patch-noise mode needs >= 2 videos and >= 2 frames");
  }
}

nlohmann::json SynthConfig::to_json() const {
  return {{"videos", videos},
          {"queries", queries},
          {"dim", dim},
          {"frames", frames},
          {"patches_per_frame", patches_per_frame},
          {"seed", seed},
          {"noise", noise},
          {"mode", std::string(to_string(mode))},
          {"prng", "xoshiro256** seeded by splitmix64"}};
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  Builder builder(config);
  Planted planted;
  switch (config.mode) {
    case DistractorMode::None: planted = plant_none(config, builder); break;
    case DistractorMode::CoarseConfusable: planted = plant_coarse_confusable(config, builder); break;
    case DistractorMode::PatchNoise: planted = plant_patch_noise(config, builder); break;
  }

  SynthData data;
  data.videos = std::move(planted.videos);
  data.manifest.dataset = "synthetic-" + std::string(to_string(config.mode));
  data.manifest.dim = static_cast<std::int64_t>(config.dim);
  for (std::size_t j = 0; j < config.queries; ++j) {
    TextRecord t;
    char id[32];
    std::snprintf(id, sizeof(id), "text%05zu", j);
    t.id = id;
    Eigen::VectorXd q = planted.query_concepts[j] + builder.gauss(config.noise);
    t.feature = (q / q.norm()).cast<float>();
    data.manifest.pairs.push_back({t.id, data.videos[planted.targets[j]].id});
    data.texts.push_back(std::move(t));
  }
  data.manifest.video_count = data.videos.size();
  data.manifest.text_count = data.texts.size();
  data.manifest.extra["synth_config"] = config.to_json();
  return data;
}

namespace {

// Plain-loop helpers. Rounding to float mirrors the stored precision of the
// coarse and text-conditioned vectors.
std::vector<float> unit_float(const std::vector<double>& v) {
  std::vector<float> rounded(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) rounded[d] = static_cast<float>(v[d]);
  double sq = 0.0;
  for (float x : rounded) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (norm < 1e-12) throw Error(ErrorCode::ZeroNorm, "oracle: zero-norm vector");
  std::vector<float> out(v.size());
  for (std::size_t d = 0; d < v.size(); ++d) out[d] = static_cast<float>(static_cast<double>(rounded[d]) / norm);
  return out;
}

double dot_float(const std::vector<float>& a, const float* b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += static_cast<double>(a[d]) * static_cast<double>(b[d]);
  return s;
}

std::vector<float> naive_attention(const float* rows, std::size_t count, std::size_t dim, const float* text,
                                   double temperature) {
  std::vector<double> logits(count);
  double peak = -INFINITY;
  for (std::size_t m = 0; m < count; ++m) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      s += static_cast<double>(rows[m * dim + d]) * static_cast<double>(text[d]);
    }
    logits[m] = s / temperature;
    peak = std::max(peak, logits[m]);
  }
  double total = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - peak);
    total += l;
  }
  std::vector<double> pooled(dim, 0.0);
  for (std::size_t m = 0; m < count; ++m) {
    const double w = logits[m] / total;
    for (std::size_t d = 0; d < dim; ++d) pooled[d] += w * static_cast<double>(rows[m * dim + d]);
  }
  return unit_float(pooled);
}

}  // namespace

RankedList brute_force_rank(const TextRecord& text, const Gallery& gallery, const SearchConfig& config) {
  const double sum = config.weights.coarse + config.weights.frame + config.weights.patch;
  const double w1 = config.weights.coarse / sum;
  const double w2 = config.weights.frame / sum;
  const double w3 = config.weights.patch / sum;
  const auto dim = static_cast<std::size_t>(gallery.dim());
  std::vector<float> query(text.feature.data(), text.feature.data() + text.feature.size());

  RankedList out{Stage::Final, {}};
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const VideoRecord& v = gallery[i];
    const auto frames = static_cast<std::size_t>(v.frames.rows());
    const auto patches = static_cast<std::size_t>(v.patches.rows());

    std::vector<double> mean(dim, 0.0);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += static_cast<double>(v.frames.data()[t * dim + d]);
    for (auto& x : mean) x /= static_cast<double>(frames);
    const auto coarse = unit_float(mean);

    const auto frame_vec = naive_attention(v.frames.data(), frames, dim, query.data(), config.tib.frame_temperature);
    const auto patch_vec = naive_attention(v.patches.data(), patches, dim, query.data(), config.tib.patch_temperature);

    const double score = w1 * dot_float(coarse, query.data()) + w2 * dot_float(frame_vec, query.data()) +
                         w3 * dot_float(patch_vec, query.data());
    out.entries.push_back({i, v.id, score});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  });
  return out;
}

Metrics oracle_metrics(const std::vector<std::vector<std::string>>& ranked_ids,
                       const std::vector<std::string>& ground_truth) {
  Metrics m;
  m.queries = ranked_ids.size();
  double* slots[] = {&m.r_at_1, &m.r_at_5, &m.r_at_10};
  const std::size_t cutoffs[] = {1, 5, 10};
  for (int c = 0; c < 3; ++c) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < ranked_ids.size(); ++q) {
      const auto& ids = ranked_ids[q];
      const auto end = ids.begin() + static_cast<std::ptrdiff_t>(std::min(cutoffs[c], ids.size()));
      if (std::find(ids.begin(), end, ground_truth[q]) != end) ++hits;
    }
    *slots[c] = ranked_ids.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(ranked_ids.size());
  }
  m.mean = (m.r_at_1 + m.r_at_5 + m.r_at_10) / 3.0;
  return m;
}

}  // namespace eercf::testkit
