#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eercf/error.hpp"
#include "json.hpp"

namespace eercf {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Row-per-feature storage used for frames, patches and coarse vectors.
using FeatureMatrix = RowMatrix<float>;

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-5;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// L2-normalizes `v`. The norm is computed in double precision; the result
/// keeps the input scalar type.
template <typename Derived>
Vector<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (!all_finite(v)) throw Error(ErrorCode::NonFinite, "cannot normalize a non-finite vector");
  const Eigen::VectorXd wide = v.template cast<double>();
  const double norm = wide.norm();
  if (norm < kZeroNormThreshold) throw Error(ErrorCode::ZeroNorm, "vector norm below 1e-12");
  return (wide / norm).template cast<Scalar>();
}

/// Column mean of a T x D matrix (the text-agnostic pooling). Not normalized.
template <typename Derived>
Vector<typename Derived::Scalar> mean_pool(const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  if (rows.rows() == 0) throw Error(ErrorCode::EmptyInput, "mean_pool over zero rows");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) acc += rows.row(r).transpose().template cast<double>();
  acc /= static_cast<double>(rows.rows());
  return acc.template cast<Scalar>();
}

struct VideoRecord {
  std::string id;
  FeatureMatrix frames;   // T x D, raw
  FeatureMatrix patches;  // (T * patches_per_frame) x D, frame-major, raw
  Eigen::Index patches_per_frame = 0;
  Eigen::VectorXf coarse;  // unit-norm mean-pooled frames, derived

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }

  auto frame_patches(Eigen::Index frame) const {
    return patches.middleRows(frame * patches_per_frame, patches_per_frame);
  }
};

struct TextRecord {
  std::string id;
  Eigen::VectorXf feature;  // unit norm
  std::optional<std::string> caption;
};

struct RelevancePair {
  std::string text_id;
  std::string video_id;
  friend bool operator==(const RelevancePair&, const RelevancePair&) = default;
};

struct Manifest {
  std::string dataset;
  std::int64_t dim = 0;
  std::size_t video_count = 0;
  std::size_t text_count = 0;
  std::vector<RelevancePair> pairs;
  nlohmann::json extra = nlohmann::json::object();  // e.g. synth_config
};

/// Validates shape and finiteness of a record and fills in `coarse`.
void finalize_video(VideoRecord& video);

/// Immutable, indexed collection of videos sharing one dimension.
class Gallery {
 public:
  Gallery() = default;
  /// Validates every record (shape, finiteness, unique ids) and derives the
  /// coarse vectors. Throws on the first violation.
  explicit Gallery(std::vector<VideoRecord> videos);

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return videos_.size(); }
  bool empty() const { return videos_.empty(); }

  const VideoRecord& operator[](std::size_t i) const { return videos_[i]; }
  const std::vector<VideoRecord>& videos() const { return videos_; }
  /// N x D matrix of unit coarse vectors, row i belongs to video i.
  const FeatureMatrix& coarse_matrix() const { return coarse_; }

  std::optional<std::size_t> find(const std::string& id) const;

 private:
  Eigen::Index dim_ = 0;
  std::vector<VideoRecord> videos_;
  FeatureMatrix coarse_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binary container constants.
namespace format {
inline constexpr std::uint8_t kMagic[6] = {0x45, 0x45, 0x52, 0x43, 0x46, 0x00};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 6 + 2 + 4 + 8;
inline constexpr const char* kVideosFile = "videos.bin";
inline constexpr const char* kTextsFile = "texts.bin";
inline constexpr const char* kManifestFile = "manifest.json";

/// Exact byte size of a videos.bin holding the given records.
std::uint64_t videos_file_size(std::span<const VideoRecord> videos, std::int64_t dim);
std::uint64_t texts_file_size(std::span<const TextRecord> texts, std::int64_t dim);
}  // namespace format

void write_videos(std::span<const VideoRecord> videos, std::int64_t dim,
                  const std::filesystem::path& path);
void write_texts(std::span<const TextRecord> texts, std::int64_t dim,
                 const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Writes videos.bin, texts.bin and manifest.json into `dir` (created if
/// missing). All records must share manifest.dim.
void write_gallery(std::span<const VideoRecord> videos, std::span<const TextRecord> texts,
                   const Manifest& manifest, const std::filesystem::path& dir);

Gallery load_gallery(const std::filesystem::path& videos_path);
std::vector<TextRecord> load_texts(const std::filesystem::path& texts_path);
Manifest load_manifest(const std::filesystem::path& manifest_path);

Manifest manifest_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const Manifest& manifest);

struct Dataset {
  Gallery gallery;
  std::vector<TextRecord> texts;
  Manifest manifest;
};

/// Checks that dims agree and every manifest id resolves.
void validate_dataset(const Gallery& gallery, std::span<const TextRecord> texts,
                      const Manifest& manifest);

Dataset load_dataset(const std::filesystem::path& videos_path,
                     const std::filesystem::path& texts_path,
                     const std::filesystem::path& manifest_path);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace eercf
