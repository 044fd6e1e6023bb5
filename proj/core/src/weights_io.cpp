#include "vitsi/weights_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vitsi/errors.hpp"

namespace vitsi {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'T', 'W'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::vector<unsigned char>& bytes, std::size_t offset) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[offset + i]) << (8 * i);
  return v;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

}  // namespace

void save_weights(const ViTWeights& weights, const std::filesystem::path& path) {
  validate_weights(weights);
  const auto layout = tensor_layout(weights.config);
  const auto slots = tensor_slots(weights);

  nlohmann::json manifest = nlohmann::json::array();
  std::string data;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::size_t offset = data.size();
    for (double v : slots[i]->data()) put_le(data, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    manifest.push_back({{"name", layout[i].name},
                        {"dtype", "f32"},
                        {"shape", layout[i].shape},
                        {"byte_offset", offset},
                        {"byte_length", data.size() - offset}});
  }
  const std::string text = manifest.dump();

  std::string header(kMagic, sizeof(kMagic));
  put_le(header, kWeightFormatVersion);
  put_le(header, static_cast<std::uint64_t>(text.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  out << header << text << data;
  if (!out) throw LoadError("write failed for " + path.string());
}

ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open weight file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = 4 + 4 + 8;
  if (bytes.size() < kHeader || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw LoadError(path.string() + ": bad magic, not a VITW file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kWeightFormatVersion) {
    throw LoadError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - kHeader) {
    throw LoadError(path.string() + ": manifest length exceeds file size");
  }
  const std::size_t data_start = kHeader + manifest_len;
  const std::size_t data_size = bytes.size() - data_start;

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + kHeader, bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": manifest is not valid JSON: " + e.what());
  }
  if (!manifest.is_array()) throw LoadError(path.string() + ": manifest must be a JSON array");

  std::map<std::string, const nlohmann::json*> records;
  for (const auto& rec : manifest) {
    if (!rec.is_object() || !rec.contains("name")) throw LoadError(path.string() + ": malformed manifest record");
    records[rec.at("name").get<std::string>()] = &rec;
  }

  ViTWeights w = zero_weights(config);
  const auto layout = tensor_layout(config);
  const auto slots = tensor_slots(w);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::string& name = layout[i].name;
    const auto it = records.find(name);
    if (it == records.end()) throw LoadError(path.string() + ": missing tensor " + name);
    const auto& rec = *it->second;
    try {
      if (rec.at("dtype").get<std::string>() != "f32") {
        throw LoadError(path.string() + ": tensor " + name + " has unsupported dtype");
      }
      const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
      if (shape != layout[i].shape) {
        throw LoadError(path.string() + ": tensor " + name + " has shape " + shape_string(shape) +
                        ", expected " + shape_string(layout[i].shape));
      }
      const auto offset = rec.at("byte_offset").get<std::uint64_t>();
      const auto length = rec.at("byte_length").get<std::uint64_t>();
      if (length != 4 * layout[i].elements()) {
        throw LoadError(path.string() + ": tensor " + name + " byte_length " + std::to_string(length) +
                        " does not match its shape");
      }
      if (offset > data_size || length > data_size - offset) {
        throw LoadError(path.string() + ": data section truncated inside tensor " + name);
      }
      auto& dst = slots[i]->data();
      for (std::size_t k = 0; k < dst.size(); ++k) {
        const auto raw = get_le<std::uint32_t>(bytes, data_start + offset + 4 * k);
        dst[k] = static_cast<double>(std::bit_cast<float>(raw));
      }
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": malformed record for tensor " + name + ": " + e.what());
    }
  }
  return w;
}

}  // namespace vitsi
