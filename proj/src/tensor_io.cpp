#include "xrm/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "xrm/errors.hpp"

namespace xrm {
namespace {

using nlohmann::json;

constexpr std::uint8_t kMagic[4] = {'X', 'R', 'M', 'D'};
constexpr std::string_view kEmbeddings = "embeddings";
constexpr std::string_view kHiddenPrefix = "hidden/";

std::size_t align_up(std::size_t n) {
  return (n + kXrmdAlignment - 1) / kXrmdAlignment * kXrmdAlignment;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
}

void get_floats(const std::uint8_t* p, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_u32(p + 4 * i));
}

bool floats_bit_equal(const float* a, const float* b, std::size_t n) {
  return n == 0 || std::memcmp(a, b, n * sizeof(float)) == 0;
}

// Payload view used by the writer: name-sorted, borrowed from the dump.
struct PayloadRef {
  std::vector<std::size_t> shape;
  const float* data;
  std::size_t count;
};

std::map<std::string, PayloadRef> collect_payloads(const ModelDump& dump) {
  std::map<std::string, PayloadRef> out;
  if (dump.embeddings) {
    const auto& e = *dump.embeddings;
    out.emplace(std::string(kEmbeddings),
                PayloadRef{{static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols())},
                           e.data(),
                           static_cast<std::size_t>(e.size())});
  }
  for (const auto& [key, state] : dump.hidden_states) {
    out.emplace(hidden_tensor_name(key),
                PayloadRef{{static_cast<std::size_t>(state.size())}, state.data(),
                           static_cast<std::size_t>(state.size())});
  }
  for (const auto& [name, tensor] : dump.extra_tensors) {
    out.emplace(name, PayloadRef{tensor.shape, tensor.data.data(), tensor.data.size()});
  }
  return out;
}

std::size_t checked_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw FormatError("metadata", "tensor shape overflows");
    }
    n *= d;
  }
  return n;
}

std::uint64_t require_uint(const json& obj, const char* key, const char* where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_unsigned()) {
    throw FormatError("metadata", std::string(where) + ": missing or non-integer '" + key + "'");
  }
  return it->get<std::uint64_t>();
}

}  // namespace

std::string hidden_tensor_name(const StateKey& key) {
  return std::string(kHiddenPrefix) + key.example_id + "/" + key.language;
}

void ModelDump::validate() const {
  if (d_model == 0) throw ValidationError("d_model must be positive");
  if (embeddings) {
    if (static_cast<std::size_t>(embeddings->rows()) != vocab_size) {
      throw ValidationError("embeddings has " + std::to_string(embeddings->rows()) +
                            " rows but vocab_size is " + std::to_string(vocab_size));
    }
    if (static_cast<std::size_t>(embeddings->cols()) != d_model) {
      throw ValidationError("embeddings width " + std::to_string(embeddings->cols()) +
                            " != d_model " + std::to_string(d_model));
    }
  }
  for (const auto& [key, state] : hidden_states) {
    if (key.example_id.empty() || key.language.empty() ||
        key.language.find('/') != std::string::npos) {
      throw ValidationError("bad hidden-state key '" + key.example_id + "'/'" + key.language + "'");
    }
    if (static_cast<std::size_t>(state.size()) != d_model) {
      throw ValidationError("hidden state " + hidden_tensor_name(key) + " has length " +
                            std::to_string(state.size()) + ", expected d_model " +
                            std::to_string(d_model));
    }
  }
  for (const auto& [name, tensor] : extra_tensors) {
    if (name.empty() || name == kEmbeddings || name.starts_with(kHiddenPrefix)) {
      throw ValidationError("reserved or empty tensor name '" + name + "'");
    }
    std::size_t n = 1;
    for (std::size_t d : tensor.shape) n *= d;
    if (n != tensor.data.size()) {
      throw ValidationError("tensor '" + name + "' shape does not match its element count");
    }
  }
}

const EmbeddingMatrix& ModelDump::require_embeddings() const {
  if (!embeddings) throw MissingTensorError("dump '" + model_name + "' has no embeddings tensor");
  return *embeddings;
}

const StateVector* ModelDump::find_state(const std::string& example_id,
                                         const std::string& language) const {
  auto it = hidden_states.find(StateKey{example_id, language});
  return it == hidden_states.end() ? nullptr : &it->second;
}

bool bit_equal(const ModelDump& a, const ModelDump& b) {
  if (a.model_name != b.model_name || a.d_model != b.d_model || a.vocab_size != b.vocab_size ||
      a.extra_metadata != b.extra_metadata || a.embeddings.has_value() != b.embeddings.has_value() ||
      a.hidden_states.size() != b.hidden_states.size() ||
      a.extra_tensors.size() != b.extra_tensors.size()) {
    return false;
  }
  if (a.embeddings) {
    const auto& ea = *a.embeddings;
    const auto& eb = *b.embeddings;
    if (ea.rows() != eb.rows() || ea.cols() != eb.cols() ||
        !floats_bit_equal(ea.data(), eb.data(), ea.size())) {
      return false;
    }
  }
  for (auto ia = a.hidden_states.begin(), ib = b.hidden_states.begin();
       ia != a.hidden_states.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.size() != ib->second.size() ||
        !floats_bit_equal(ia->second.data(), ib->second.data(), ia->second.size())) {
      return false;
    }
  }
  for (auto ia = a.extra_tensors.begin(), ib = b.extra_tensors.begin();
       ia != a.extra_tensors.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape != ib->second.shape ||
        ia->second.data.size() != ib->second.data.size() ||
        !floats_bit_equal(ia->second.data.data(), ib->second.data.data(), ia->second.data.size())) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> serialize_dump(const ModelDump& dump) {
  dump.validate();
  const auto payloads = collect_payloads(dump);

  json tensors = json::object();
  std::size_t offset = 0;
  for (const auto& [name, ref] : payloads) {
    const std::size_t length = ref.count * sizeof(float);
    tensors[name] = {{"shape", ref.shape}, {"offset", offset}, {"length_bytes", length}};
    offset += length;
  }
  json meta = {{"model_name", dump.model_name},
               {"d_model", dump.d_model},
               {"vocab_size", dump.vocab_size},
               {"dtype", "f32"},
               {"tensors", std::move(tensors)}};
  if (!dump.extra_metadata.empty()) meta["extra"] = dump.extra_metadata;

  std::string meta_text;
  try {
    meta_text = meta.dump();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metadata is not serializable: ") + e.what());
  }

  const std::size_t meta_end = kXrmdHeaderSize + meta_text.size();
  const std::size_t data_start = payloads.empty() ? meta_end : align_up(meta_end);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(data_start + offset);
  put_u32(out, kXrmdVersion);
  put_u64(out, meta_text.size());
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  out.resize(data_start, 0);
  for (const auto& [name, ref] : payloads) put_floats(out, ref.data, ref.count);
  return out;
}

ModelDump parse_dump_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("magic", "file does not start with XRMD");
  }
  if (bytes.size() < kXrmdHeaderSize) throw FormatError("bounds", "truncated header");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kXrmdVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  const std::uint64_t meta_len = get_u64(bytes.data() + 8);
  if (meta_len > bytes.size() - kXrmdHeaderSize) {
    throw FormatError("bounds", "metadata extends past end of file");
  }
  const std::size_t meta_end = kXrmdHeaderSize + static_cast<std::size_t>(meta_len);

  json meta;
  try {
    meta = json::parse(bytes.begin() + kXrmdHeaderSize, bytes.begin() + meta_end);
  } catch (const json::exception& e) {
    throw FormatError("metadata", std::string("invalid JSON: ") + e.what());
  }
  if (!meta.is_object()) throw FormatError("metadata", "metadata is not a JSON object");

  ModelDump dump;
  auto name_it = meta.find("model_name");
  if (name_it == meta.end() || !name_it->is_string()) {
    throw FormatError("metadata", "missing 'model_name'");
  }
  dump.model_name = name_it->get<std::string>();
  dump.d_model = require_uint(meta, "d_model", "metadata");
  auto dtype_it = meta.find("dtype");
  if (dtype_it == meta.end() || *dtype_it != "f32") {
    throw FormatError("metadata", "dtype must be \"f32\"");
  }
  if (auto extra_it = meta.find("extra"); extra_it != meta.end()) {
    if (!extra_it->is_object()) throw FormatError("metadata", "'extra' must be an object");
    for (const auto& [k, v] : extra_it->items()) {
      if (!v.is_string()) throw FormatError("metadata", "'extra." + k + "' must be a string");
      dump.extra_metadata.emplace(k, v.get<std::string>());
    }
  }
  auto tensors_it = meta.find("tensors");
  if (tensors_it == meta.end() || !tensors_it->is_object()) {
    throw FormatError("metadata", "missing 'tensors' map");
  }

  const std::size_t data_start = tensors_it->empty() ? meta_end : align_up(meta_end);
  const std::size_t data_size = bytes.size() > data_start ? bytes.size() - data_start : 0;

  for (const auto& [name, entry] : tensors_it->items()) {
    if (!entry.is_object()) throw FormatError("metadata", "tensor '" + name + "' is not an object");
    auto shape_it = entry.find("shape");
    if (shape_it == entry.end() || !shape_it->is_array()) {
      throw FormatError("metadata", "tensor '" + name + "' has no shape");
    }
    std::vector<std::size_t> shape;
    for (const auto& d : *shape_it) {
      if (!d.is_number_unsigned()) throw FormatError("metadata", "tensor '" + name + "' bad shape");
      shape.push_back(d.get<std::size_t>());
    }
    const std::uint64_t offset = require_uint(entry, "offset", name.c_str());
    const std::uint64_t length = require_uint(entry, "length_bytes", name.c_str());
    const std::size_t count = checked_product(shape);
    if (length != count * sizeof(float)) {
      throw FormatError("metadata", "tensor '" + name + "' length_bytes does not match shape");
    }
    if (offset > data_size || length > data_size - offset) {
      throw FormatError("bounds", "tensor '" + name + "' lies outside the file");
    }
    const std::uint8_t* src = bytes.data() + data_start + offset;

    if (name == kEmbeddings) {
      if (shape.size() != 2) throw ValidationError("embeddings must be rank 2");
      EmbeddingMatrix e(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
      get_floats(src, e.data(), count);
      dump.embeddings = std::move(e);
    } else if (name.starts_with(kHiddenPrefix)) {
      const auto slash = name.rfind('/');
      StateKey key{name.substr(kHiddenPrefix.size(), slash - kHiddenPrefix.size()),
                   name.substr(slash + 1)};
      if (slash < kHiddenPrefix.size() || key.example_id.empty() || key.language.empty()) {
        throw ValidationError("hidden tensor '" + name + "' is not hidden/{example_id}/{language}");
      }
      if (shape.size() != 1) throw ValidationError("hidden tensor '" + name + "' must be rank 1");
      StateVector v(static_cast<Eigen::Index>(count));
      get_floats(src, v.data(), count);
      dump.hidden_states.emplace(std::move(key), std::move(v));
    } else {
      Tensor t{std::move(shape), std::vector<float>(count)};
      get_floats(src, t.data.data(), count);
      dump.extra_tensors.emplace(name, std::move(t));
    }
  }

  if (auto vs = meta.find("vocab_size"); vs != meta.end()) {
    if (!vs->is_number_unsigned()) throw FormatError("metadata", "non-integer 'vocab_size'");
    dump.vocab_size = vs->get<std::size_t>();
  } else if (dump.embeddings) {
    dump.vocab_size = static_cast<std::size_t>(dump.embeddings->rows());
  }
  dump.validate();
  return dump;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw IoError("failed reading '" + path.string() + "'");
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ModelDump parse_dump(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_dump_bytes(bytes);
}

void write_dump(const ModelDump& dump, const std::filesystem::path& path) {
  const auto bytes = serialize_dump(dump);
  write_file_bytes(path, bytes);
}

}  // namespace xrm
