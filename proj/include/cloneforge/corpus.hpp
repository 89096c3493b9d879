#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cloneforge/tensor_nn.hpp"

namespace cloneforge {

inline constexpr std::size_t kCifarRecordSize = 3073;

struct SkippedEntry {
  std::string path;
  std::string reason;
};

struct CorpusManifest {
  std::vector<std::string> sources;
  std::string format;  // "cifar10-bin", "image-dir" or "cfc-store"
  std::size_t count = 0;
  std::size_t files_scanned = 0;
  std::vector<SkippedEntry> skipped;
  std::string checksum;     // FNV-1a 64 of the normalized store, hex
  std::vector<int> labels;  // CIFAR class labels when known; never used for training
};

/// Immutable set of normalized 3 x 32 x 32 images in [0, 1].
class Corpus {
 public:
  Corpus(std::vector<float> pixels, std::vector<std::string> ids, CorpusManifest manifest);

  std::size_t size() const { return ids_.size(); }
  std::span<const float> image(std::size_t index) const;
  /// 3 x 32 x 32 copy of one image.
  Tensor get(std::size_t index) const;
  /// N x 3 x 32 x 32 batch of the given indices.
  Tensor gather(std::span<const std::size_t> indices) const;

  const std::vector<std::string>& ids() const { return ids_; }
  const CorpusManifest& manifest() const { return manifest_; }
  const std::string& checksum() const { return manifest_.checksum; }
  std::span<const float> pixels() const { return pixels_; }

  /// Index of an id, or size() when absent.
  std::size_t find(const std::string& id) const;

 private:
  std::vector<float> pixels_;
  std::vector<std::string> ids_;
  CorpusManifest manifest_;
};

/// CIFAR-10 binary batches: records of 1 label byte + 1024 R + 1024 G + 1024 B.
Corpus load_cifar10_bin(const std::vector<std::filesystem::path>& paths);
/// Every file in `dir` (lexicographic order) decoded, resized to 32 x 32 and
/// scaled to [0, 1]. Unreadable files are skipped and listed in the manifest.
Corpus load_image_dir(const std::filesystem::path& dir, int resize = 32);

/// "CFC1" store: N u32, N x 3072 f32 little-endian, then N ids as
/// (length u32, bytes).
void save_store(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_store(const std::filesystem::path& path);

std::string manifest_to_json(const CorpusManifest& manifest, int indent = 2);
CorpusManifest manifest_from_json(const std::string& text);

std::string pixel_checksum(std::span<const float> pixels);

}  // namespace cloneforge
