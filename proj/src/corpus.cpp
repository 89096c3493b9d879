#include "cloneforge/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include "json.hpp"
#include <unordered_set>

#include "binary_io.hpp"
#include "cloneforge/encoder.hpp"
#include "cloneforge/image_codec.hpp"
#include "cloneforge/rng.hpp"

namespace cloneforge {

namespace {

constexpr char kStoreMagic[4] = {'C', 'F', 'C', '1'};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& store) {
  auto p = store;
  p += ".json";
  return p;
}

}  // namespace

std::string pixel_checksum(std::span<const float> pixels) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : pixels) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    h = fnv1a64(b, 4, h);
  }
  return hex64(h);
}

Corpus::Corpus(std::vector<float> pixels, std::vector<std::string> ids, CorpusManifest manifest)
    : pixels_(std::move(pixels)), ids_(std::move(ids)), manifest_(std::move(manifest)) {
  if (pixels_.size() != ids_.size() * static_cast<std::size_t>(kImageSize)) {
    throw std::invalid_argument("corpus: pixel buffer does not hold " + std::to_string(ids_.size()) +
                                " images");
  }
  if (ids_.size() < 2) throw std::invalid_argument("corpus: need at least 2 images");
  for (float v : pixels_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw std::invalid_argument("corpus: pixel values must be finite and in [0, 1]");
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw std::invalid_argument("corpus: duplicate id '" + id + "'");
  }
  manifest_.count = ids_.size();
  manifest_.checksum = pixel_checksum(pixels_);
}

std::span<const float> Corpus::image(std::size_t index) const {
  if (index >= size()) {
    throw std::out_of_range("corpus: index " + std::to_string(index) + " out of range (size " +
                            std::to_string(size()) + ")");
  }
  return std::span<const float>(pixels_).subspan(index * kImageSize, kImageSize);
}

Tensor Corpus::get(std::size_t index) const {
  auto img = image(index);
  return Tensor({kImageChannels, kImageSide, kImageSide}, std::vector<float>(img.begin(), img.end()));
}

Tensor Corpus::gather(std::span<const std::size_t> indices) const {
  Tensor batch({static_cast<std::int64_t>(indices.size()), kImageChannels, kImageSide, kImageSide});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto img = image(indices[i]);
    std::copy(img.begin(), img.end(), batch.data.begin() + static_cast<std::ptrdiff_t>(i * kImageSize));
  }
  return batch;
}

std::size_t Corpus::find(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  return static_cast<std::size_t>(it - ids_.begin());
}

Corpus load_cifar10_bin(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw std::invalid_argument("load_cifar10_bin: no input files");
  std::vector<float> pixels;
  std::vector<std::string> ids;
  CorpusManifest manifest;
  manifest.format = "cifar10-bin";
  for (const auto& path : paths) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read CIFAR-10 file " + path.string());
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
    if (bytes.size() % kCifarRecordSize != 0) {
      const std::size_t whole = bytes.size() / kCifarRecordSize;
      throw std::runtime_error(path.string() + ": size " + std::to_string(bytes.size()) +
                               " is not a multiple of 3073; truncated record at byte offset " +
                               std::to_string(whole * kCifarRecordSize));
    }
    manifest.sources.push_back(path.string());
    ++manifest.files_scanned;
    const std::size_t records = bytes.size() / kCifarRecordSize;
    const std::string stem = path.filename().string();
    pixels.reserve(pixels.size() + records * kImageSize);
    for (std::size_t r = 0; r < records; ++r) {
      const unsigned char* rec = bytes.data() + r * kCifarRecordSize;
      manifest.labels.push_back(rec[0]);
      for (std::size_t i = 1; i < kCifarRecordSize; ++i) pixels.push_back(static_cast<float>(rec[i]) / 255.0f);
      ids.push_back(stem + ":" + std::to_string(r));
    }
  }
  return Corpus(std::move(pixels), std::move(ids), std::move(manifest));
}

Corpus load_image_dir(const std::filesystem::path& dir, int resize) {
  if (resize != kImageSide) throw std::invalid_argument("load_image_dir: only 32x32 output is supported");
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  CorpusManifest manifest;
  manifest.format = "image-dir";
  manifest.sources.push_back(dir.string());
  manifest.files_scanned = files.size();
  std::vector<float> pixels;
  std::vector<std::string> ids;
  for (const auto& file : files) {
    try {
      const RgbImage rgb = read_ppm(file);
      std::vector<float> planar(static_cast<std::size_t>(rgb.width) * rgb.height * 3);
      const std::size_t plane = static_cast<std::size_t>(rgb.width) * rgb.height;
      for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) planar[c * plane + i] = static_cast<float>(rgb.pixels[i * 3 + c]) / 255.0f;
      }
      auto resized = resize_bilinear(planar, 3, rgb.height, rgb.width, resize, resize);
      for (float& v : resized) v = std::clamp(v, 0.0f, 1.0f);
      pixels.insert(pixels.end(), resized.begin(), resized.end());
      ids.push_back(file.filename().string());
    } catch (const std::exception& e) {
      manifest.skipped.push_back({file.string(), e.what()});
    }
  }
  if (ids.size() < 2) {
    std::string msg = "need at least 2 usable images in " + dir.string() + ", found " +
                      std::to_string(ids.size()) + "; skipped:";
    for (const auto& s : manifest.skipped) msg += "\n  " + s.path + ": " + s.reason;
    throw std::runtime_error(msg);
  }
  return Corpus(std::move(pixels), std::move(ids), std::move(manifest));
}

void save_store(const std::filesystem::path& path, const Corpus& corpus) {
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os.write(kStoreMagic, 4);
    detail::write_u32(os, static_cast<std::uint32_t>(corpus.size()));
    for (float v : corpus.pixels()) detail::write_f32(os, v);
    for (const auto& id : corpus.ids()) {
      detail::write_u32(os, static_cast<std::uint32_t>(id.size()));
      os.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
  }
  std::ofstream ms(manifest_path_for(path), std::ios::trunc);
  ms << manifest_to_json(corpus.manifest()) << '\n';
}

Corpus load_store(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open corpus store " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kStoreMagic)) {
    throw std::runtime_error(path.string() + ": not a CFC1 corpus store");
  }
  const std::uint32_t n = detail::read_u32(is, "image count");
  std::vector<float> pixels(static_cast<std::size_t>(n) * kImageSize);
  for (float& v : pixels) v = detail::read_f32(is, "pixel data");
  std::vector<std::string> ids(n);
  for (auto& id : ids) {
    const std::uint32_t len = detail::read_u32(is, "id length");
    if (len > (1u << 20)) throw std::runtime_error(path.string() + ": id length out of range");
    id.resize(len);
    if (!is.read(id.data(), len)) throw std::runtime_error(path.string() + ": truncated id table");
  }
  CorpusManifest manifest;
  if (std::ifstream ms(manifest_path_for(path)); ms) {
    std::string text{std::istreambuf_iterator<char>(ms), std::istreambuf_iterator<char>()};
    manifest = manifest_from_json(text);
  } else {
    manifest.format = "cfc-store";
    manifest.sources.push_back(path.string());
  }
  return Corpus(std::move(pixels), std::move(ids), std::move(manifest));
}

std::string manifest_to_json(const CorpusManifest& m, int indent) {
  nlohmann::json j;
  j["sources"] = m.sources;
  j["format"] = m.format;
  j["count"] = m.count;
  j["files_scanned"] = m.files_scanned;
  j["skipped"] = nlohmann::json::array();
  for (const auto& s : m.skipped) j["skipped"].push_back({{"path", s.path}, {"reason", s.reason}});
  j["checksum"] = m.checksum;
  j["labels"] = m.labels;
  return j.dump(indent);
}

CorpusManifest manifest_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  CorpusManifest m;
  m.sources = j.value("sources", std::vector<std::string>{});
  m.format = j.value("format", std::string{});
  m.count = j.value("count", std::size_t{0});
  m.files_scanned = j.value("files_scanned", std::size_t{0});
  if (j.contains("skipped")) {
    for (const auto& s : j["skipped"]) m.skipped.push_back({s.value("path", ""), s.value("reason", "")});
  }
  m.checksum = j.value("checksum", std::string{});
  m.labels = j.value("labels", std::vector<int>{});
  return m;
}

}  // namespace cloneforge
