#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sctc/fixtures.hpp"
#include "sctc/tensor.hpp"

namespace sctc {

// Tensor blob: 8-byte magic, dtype byte, rank (u32 LE), extents (u32 LE
// each), then the row-major little-endian payload.
inline constexpr std::array<char, 8> kBlobMagic = {'S', 'C', 'T', 'C', 'B', 'L', 'O', 'B'};

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2 };

void write_blob(std::ostream& out, const Tensor& t, DType dtype);

// Parses the blob starting at `offset` and advances it. `field` names the
// tensor in error messages.
Tensor read_blob(std::span<const char> bytes, std::size_t& offset, const std::string& field);

using NamedTensor = std::pair<std::string, Tensor>;

// A container is one compact JSON document terminated by '\n', followed by
// the blobs listed in its "tensors" manifest, in manifest order.
struct Container {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

std::string encode_container(nlohmann::json meta, const std::vector<NamedTensor>& tensors,
                             DType dtype);
Container decode_container(std::span<const char> bytes);

void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

std::string encode_scene(const Scene& scene);
Scene decode_scene(std::span<const char> bytes);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene load_scene(const std::filesystem::path& path);

std::string encode_vocabulary(const HoiVocabulary& vocab);
HoiVocabulary decode_vocabulary(std::span<const char> bytes);
void save_vocabulary(const std::filesystem::path& path, const HoiVocabulary& vocab);
HoiVocabulary load_vocabulary(const std::filesystem::path& path);

// Directory layout: manifest.json, vocab.sctc, train/*.sctc, test/*.sctc.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds,
                  const nlohmann::json& generator_config = {});
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace sctc
