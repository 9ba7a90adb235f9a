#pragma once

// XRMD: a self-describing container for the float tensors a model exporter
// produces (tied embedding matrix, last hidden states, trained heads).
//
//   offset 0   "XRMD"                      4 bytes
//   offset 4   version (u32 LE) = 1
//   offset 8   metadata length (u64 LE)
//   offset 16  UTF-8 JSON metadata
//              zero padding to the next 64-byte boundary (only when the file
//              holds at least one tensor)
//              tensor payloads, f32 LE, offsets relative to this point
//
// The metadata object carries model_name, d_model, dtype ("f32"), vocab_size,
// an optional "extra" string map and a "tensors" map of
// name -> {shape, offset, length_bytes}. Canonical files list tensors in name
// order, packed back to back, with compact sorted-key JSON.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace xrm {

using EmbeddingMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StateVector = Eigen::VectorXf;

inline constexpr std::uint32_t kXrmdVersion = 1;
inline constexpr std::size_t kXrmdHeaderSize = 16;
inline constexpr std::size_t kXrmdAlignment = 64;

struct StateKey {
  std::string example_id;
  std::string language;

  auto operator<=>(const StateKey&) const = default;
};

// Any tensor that is neither the embedding matrix nor a hidden state.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

struct ModelDump {
  std::string model_name;
  std::size_t d_model = 0;
  std::size_t vocab_size = 0;
  std::optional<EmbeddingMatrix> embeddings;
  std::map<StateKey, StateVector> hidden_states;
  std::map<std::string, Tensor> extra_tensors;
  std::map<std::string, std::string> extra_metadata;

  // Throws ValidationError on the first violated invariant.
  void validate() const;

  // Throws MissingTensorError when the dump has no embeddings tensor.
  const EmbeddingMatrix& require_embeddings() const;

  const StateVector* find_state(const std::string& example_id,
                                const std::string& language) const;
};

// Field-wise equality with floats compared by bit pattern.
bool bit_equal(const ModelDump& a, const ModelDump& b);

std::string hidden_tensor_name(const StateKey& key);

std::vector<std::uint8_t> serialize_dump(const ModelDump& dump);
ModelDump parse_dump_bytes(std::span<const std::uint8_t> bytes);

ModelDump parse_dump(const std::filesystem::path& path);
void write_dump(const ModelDump& dump, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace xrm
