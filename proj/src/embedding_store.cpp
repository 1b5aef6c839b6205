#include "eercf/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <unordered_set>

namespace eercf {

namespace {

constexpr std::size_t kMaxU16 = std::numeric_limits<std::uint16_t>::max();

// Little-endian byte sink. Every multi-byte value goes through put_le so the
// layout does not depend on host endianness.
class ByteWriter {
 public:
  template <typename T>
  void put_le(T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<char>(bits & 0xFF));
      bits = static_cast<U>(bits >> 8);
    }
  }
  void put_f32(float value) { put_le(std::bit_cast<std::uint32_t>(value)); }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_header(std::int64_t dim, std::uint64_t count) {
    put_bytes(format::kMagic, sizeof(format::kMagic));
    put_le(format::kVersion);
    put_le(static_cast<std::uint32_t>(dim));
    put_le(count);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T get_le() {
    using U = std::make_unsigned_t<T>;
    require(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(bits);
  }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  std::string get_string(std::size_t n) {
    require(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <typename Derived>
  void get_rows(Eigen::PlainObjectBase<Derived>& m) {
    require(static_cast<std::size_t>(m.size()) * sizeof(float));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_f32();
  }

  struct Header {
    std::int64_t dim;
    std::uint64_t count;
  };
  Header get_header() {
    if (bytes_.size() < sizeof(format::kMagic) ||
        std::memcmp(bytes_.data(), format::kMagic, sizeof(format::kMagic)) != 0) {
      throw Error(ErrorCode::BadMagic, source_ + ": missing EERCF magic");
    }
    pos_ = sizeof(format::kMagic);
    const auto version = get_le<std::uint16_t>();
    if (version != format::kVersion) {
      throw Error(ErrorCode::VersionUnsupported,
                  source_ + ": version " + std::to_string(version) + " (expected 1)");
    }
    const auto dim = get_le<std::uint32_t>();
    const auto count = get_le<std::uint64_t>();
    if (dim == 0) throw Error(ErrorCode::ShapeMismatch, source_ + ": dimension is zero");
    return {static_cast<std::int64_t>(dim), count};
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  void require(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::Truncated, source_ + ": file ends at byte " +
                                            std::to_string(bytes_.size()) + " mid-record");
    }
  }

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::Io, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void check_id(const std::string& id) {
  if (id.size() > kMaxU16) throw Error(ErrorCode::ShapeMismatch, "id longer than 65535 bytes");
}

void check_video_for_write(const VideoRecord& v, std::int64_t dim) {
  check_id(v.id);
  if (v.frames.cols() != dim || v.patches.cols() != dim) {
    throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' has dimension " +
                                              std::to_string(v.frames.cols()) + ", expected " +
                                              std::to_string(dim));
  }
  if (v.frames.rows() < 1 || v.patches_per_frame < 1 ||
      v.patches.rows() != v.frames.rows() * v.patches_per_frame) {
    throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' has inconsistent frame/patch shape");
  }
  if (static_cast<std::size_t>(v.frames.rows()) > kMaxU16 ||
      static_cast<std::size_t>(v.patches_per_frame) > kMaxU16) {
    throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' exceeds u16 shape fields");
  }
}

void check_text_for_write(const TextRecord& t, std::int64_t dim) {
  check_id(t.id);
  if (t.feature.size() != dim) {
    throw Error(ErrorCode::ShapeMismatch, "text '" + t.id + "' has dimension " +
                                              std::to_string(t.feature.size()) + ", expected " +
                                              std::to_string(dim));
  }
}

void check_text_norm(const TextRecord& t) {
  if (!all_finite(t.feature)) throw Error(ErrorCode::NonFinite, "text '" + t.id + "' is not finite");
  const double norm = t.feature.cast<double>().norm();
  if (std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::NotUnitNorm,
                "text '" + t.id + "' has norm " + std::to_string(norm));
  }
}

}  // namespace

void finalize_video(VideoRecord& video) {
  if (video.frames.rows() < 1) throw Error(ErrorCode::EmptyInput, "video '" + video.id + "' has no frames");
  if (video.patches_per_frame < 1 ||
      video.patches.rows() != video.frames.rows() * video.patches_per_frame ||
      video.patches.cols() != video.frames.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "video '" + video.id + "' has inconsistent patch shape");
  }
  if (!all_finite(video.frames) || !all_finite(video.patches)) {
    throw Error(ErrorCode::NonFinite, "video '" + video.id + "' has non-finite features");
  }
  video.coarse = normalize(mean_pool(video.frames));
}

Gallery::Gallery(std::vector<VideoRecord> videos) : videos_(std::move(videos)) {
  if (videos_.empty()) return;
  dim_ = videos_.front().dim();
  if (dim_ < 1) throw Error(ErrorCode::ShapeMismatch, "gallery dimension is zero");
  coarse_.resize(static_cast<Eigen::Index>(videos_.size()), dim_);
  index_.reserve(videos_.size());
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    auto& v = videos_[i];
    if (v.dim() != dim_) {
      throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' dimension differs from gallery");
    }
    finalize_video(v);
    if (!index_.emplace(v.id, i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate video id '" + v.id + "'");
    }
    coarse_.row(static_cast<Eigen::Index>(i)) = v.coarse.transpose();
  }
}

std::optional<std::size_t> Gallery::find(const std::string& id) const {
  if (auto it = index_.find(id); it != index_.end()) return it->second;
  return std::nullopt;
}

namespace format {

std::uint64_t videos_file_size(std::span<const VideoRecord> videos, std::int64_t dim) {
  std::uint64_t total = kHeaderBytes;
  for (const auto& v : videos) {
    const auto t = static_cast<std::uint64_t>(v.frames.rows());
    const auto p = static_cast<std::uint64_t>(v.patches_per_frame);
    total += 2 + v.id.size() + 2 + 2 + (t + t * p) * static_cast<std::uint64_t>(dim) * 4;
  }
  return total;
}

std::uint64_t texts_file_size(std::span<const TextRecord> texts, std::int64_t dim) {
  std::uint64_t total = kHeaderBytes;
  for (const auto& t : texts) total += 2 + t.id.size() + static_cast<std::uint64_t>(dim) * 4;
  return total;
}

}  // namespace format

void write_videos(std::span<const VideoRecord> videos, std::int64_t dim,
                  const std::filesystem::path& path) {
  if (dim < 1 || dim > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::ShapeMismatch, "dimension out of range");
  }
  for (const auto& v : videos) check_video_for_write(v, dim);
  ByteWriter w;
  w.put_header(dim, videos.size());
  for (const auto& v : videos) {
    w.put_le(static_cast<std::uint16_t>(v.id.size()));
    w.put_bytes(v.id.data(), v.id.size());
    w.put_le(static_cast<std::uint16_t>(v.frames.rows()));
    w.put_le(static_cast<std::uint16_t>(v.patches_per_frame));
    for (Eigen::Index i = 0; i < v.frames.size(); ++i) w.put_f32(v.frames.data()[i]);
    for (Eigen::Index i = 0; i < v.patches.size(); ++i) w.put_f32(v.patches.data()[i]);
  }
  write_file(path, w.bytes());
}

void write_texts(std::span<const TextRecord> texts, std::int64_t dim,
                 const std::filesystem::path& path) {
  if (dim < 1 || dim > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::ShapeMismatch, "dimension out of range");
  }
  for (const auto& t : texts) check_text_for_write(t, dim);
  ByteWriter w;
  w.put_header(dim, texts.size());
  for (const auto& t : texts) {
    w.put_le(static_cast<std::uint16_t>(t.id.size()));
    w.put_bytes(t.id.data(), t.id.size());
    for (Eigen::Index i = 0; i < t.feature.size(); ++i) w.put_f32(t.feature[i]);
  }
  write_file(path, w.bytes());
}

nlohmann::json manifest_to_json(const Manifest& manifest) {
  nlohmann::json j = manifest.extra.is_object() ? manifest.extra : nlohmann::json::object();
  j["dataset"] = manifest.dataset;
  j["dim"] = manifest.dim;
  j["counts"] = {{"videos", manifest.video_count}, {"texts", manifest.text_count}};
  auto pairs = nlohmann::json::array();
  for (const auto& p : manifest.pairs) pairs.push_back({{"text_id", p.text_id}, {"video_id", p.video_id}});
  j["pairs"] = std::move(pairs);
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.dim = j.at("dim").get<std::int64_t>();
    if (j.contains("counts")) {
      m.video_count = j["counts"].value("videos", std::size_t{0});
      m.text_count = j["counts"].value("texts", std::size_t{0});
    }
    for (const auto& p : j.at("pairs")) {
      m.pairs.push_back({p.at("text_id").get<std::string>(), p.at("video_id").get<std::string>()});
    }
    for (const auto& [key, value] : j.items()) {
      if (key != "dataset" && key != "dim" && key != "counts" && key != "pairs") m.extra[key] = value;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const std::string text = manifest_to_json(manifest).dump(2) + "\n";
  write_file(path, std::vector<char>(text.begin(), text.end()));
}

void write_gallery(std::span<const VideoRecord> videos, std::span<const TextRecord> texts,
                   const Manifest& manifest, const std::filesystem::path& dir) {
  // Validate everything before touching the filesystem.
  for (const auto& v : videos) check_video_for_write(v, manifest.dim);
  for (const auto& t : texts) {
    check_text_for_write(t, manifest.dim);
    check_text_norm(t);
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  Manifest out = manifest;
  out.video_count = videos.size();
  out.text_count = texts.size();
  write_videos(videos, manifest.dim, dir / format::kVideosFile);
  write_texts(texts, manifest.dim, dir / format::kTextsFile);
  write_manifest(out, dir / format::kManifestFile);
}

Gallery load_gallery(const std::filesystem::path& videos_path) {
  ByteReader r(read_file(videos_path), videos_path.string());
  const auto header = r.get_header();
  std::vector<VideoRecord> videos;
  videos.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(header.count, 1u << 20)));
  for (std::uint64_t i = 0; i < header.count; ++i) {
    VideoRecord v;
    v.id = r.get_string(r.get_le<std::uint16_t>());
    const auto frames = r.get_le<std::uint16_t>();
    const auto per_frame = r.get_le<std::uint16_t>();
    if (frames == 0 || per_frame == 0) {
      throw Error(ErrorCode::ShapeMismatch, r.source() + ": video '" + v.id + "' has T=0 or N_p'=0");
    }
    v.patches_per_frame = per_frame;
    v.frames.resize(frames, header.dim);
    v.patches.resize(static_cast<Eigen::Index>(frames) * per_frame, header.dim);
    r.get_rows(v.frames);
    r.get_rows(v.patches);
    videos.push_back(std::move(v));
  }
  if (!r.at_end()) throw Error(ErrorCode::ShapeMismatch, r.source() + ": trailing bytes after records");
  return Gallery(std::move(videos));
}

std::vector<TextRecord> load_texts(const std::filesystem::path& texts_path) {
  ByteReader r(read_file(texts_path), texts_path.string());
  const auto header = r.get_header();
  std::vector<TextRecord> texts;
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < header.count; ++i) {
    TextRecord t;
    t.id = r.get_string(r.get_le<std::uint16_t>());
    t.feature.resize(header.dim);
    for (Eigen::Index d = 0; d < header.dim; ++d) t.feature[d] = r.get_f32();
    check_text_norm(t);
    if (!seen.insert(t.id).second) throw Error(ErrorCode::DuplicateId, "duplicate text id '" + t.id + "'");
    texts.push_back(std::move(t));
  }
  if (!r.at_end()) throw Error(ErrorCode::ShapeMismatch, r.source() + ": trailing bytes after records");
  return texts;
}

Manifest load_manifest(const std::filesystem::path& manifest_path) {
  const auto bytes = read_file(manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ShapeMismatch, manifest_path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

void validate_dataset(const Gallery& gallery, std::span<const TextRecord> texts,
                      const Manifest& manifest) {
  if (!gallery.empty() && gallery.dim() != manifest.dim) {
    throw Error(ErrorCode::ShapeMismatch, "gallery dimension differs from manifest");
  }
  std::unordered_set<std::string> text_ids;
  for (const auto& t : texts) {
    if (t.feature.size() != manifest.dim) {
      throw Error(ErrorCode::ShapeMismatch, "text '" + t.id + "' dimension differs from manifest");
    }
    text_ids.insert(t.id);
  }
  for (const auto& p : manifest.pairs) {
    if (!text_ids.contains(p.text_id)) {
      throw Error(ErrorCode::MissingGroundTruth, "manifest text id '" + p.text_id + "' not found");
    }
    if (!gallery.find(p.video_id)) {
      throw Error(ErrorCode::MissingGroundTruth, "manifest video id '" + p.video_id + "' not found");
    }
  }
}

Dataset load_dataset(const std::filesystem::path& videos_path,
                     const std::filesystem::path& texts_path,
                     const std::filesystem::path& manifest_path) {
  Dataset ds{load_gallery(videos_path), load_texts(texts_path), load_manifest(manifest_path)};
  validate_dataset(ds.gallery, ds.texts, ds.manifest);
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / format::kVideosFile, dir / format::kTextsFile, dir / format::kManifestFile);
}

}  // namespace eercf
