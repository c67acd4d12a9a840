#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "viewuq/autodiff/tensor.hpp"
#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"

namespace viewuq {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct TensorFile {
  nlohmann::json meta;
  std::uint64_t seed = 0;
  std::vector<NamedArray> arrays;

  const NamedArray& at(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return a;
    }
    throw IoError("tensor file has no array named '" + name + "'");
  }
};

// Container layout:
//   bytes 0..7    magic "VUQTENS1"
//   bytes 8..15   header length L, u64 little-endian
//   next L bytes  UTF-8 JSON header:
//                 {"dtype":"f32","byte_order":"little","seed":S,"meta":{...},
//                  "tensors":[{"name","shape","offset","count"}, ...]}
//                 offset/count are in elements from the start of the payload
//   rest          payload, concatenated little-endian f32 arrays
inline constexpr char kTensorMagic[8] = {'V', 'U', 'Q', 'T', 'E', 'N', 'S', '1'};

inline std::vector<char> encode_tensor_file(const TensorFile& file) {
  nlohmann::json header;
  header["dtype"] = "f32";
  header["byte_order"] = "little";
  header["seed"] = file.seed;
  header["meta"] = file.meta.is_null() ? nlohmann::json::object() : file.meta;
  nlohmann::json list = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : file.arrays) {
    if (shape_numel(a.shape) != a.data.size()) {
      throw ShapeError("array '" + a.name + "' has shape " + shape_str(a.shape) + " but " +
                       std::to_string(a.data.size()) + " values");
    }
    list.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.data.size()}});
    offset += a.data.size();
  }
  header["tensors"] = std::move(list);
  const std::string text = header.dump();

  std::vector<char> out(kTensorMagic, kTensorMagic + 8);
  append_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * offset);
  for (const auto& a : file.arrays) append_f32_le(out, a.data);
  return out;
}

inline TensorFile decode_tensor_file(const std::vector<char>& bytes, const std::string& origin = "tensor file") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0) {
    throw IoError(origin + ": missing tensor-file magic");
  }
  const std::uint64_t header_len = parse_u64_le(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw IoError(origin + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": corrupt header (" + e.what() + ")");
  }
  if (header.value("dtype", "") != "f32") throw IoError(origin + ": unsupported dtype");
  const std::size_t payload_start = 16 + header_len;
  const std::size_t payload_elems = (bytes.size() - payload_start) / 4;

  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  file.seed = header.value("seed", std::uint64_t{0});
  std::size_t expected = 0;
  for (const auto& t : header.at("tensors")) {
    NamedArray a;
    a.name = t.at("name").get<std::string>();
    a.shape = t.at("shape").get<Shape>();
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t count = t.at("count").get<std::size_t>();
    if (count != shape_numel(a.shape)) throw IoError(origin + ": count/shape mismatch for '" + a.name + "'");
    if (offset + count > payload_elems) {
      throw IoError(origin + ": payload truncated at '" + a.name + "' (needs " +
                    std::to_string(4 * (offset + count)) + " bytes, has " +
                    std::to_string(bytes.size() - payload_start) + ")");
    }
    a.data = parse_f32_le(bytes.data() + payload_start + 4 * offset, count);
    expected = std::max(expected, offset + count);
    file.arrays.push_back(std::move(a));
  }
  if (bytes.size() - payload_start != 4 * expected) {
    throw IoError(origin + ": payload is " + std::to_string(bytes.size() - payload_start) + " bytes, header describes " +
                  std::to_string(4 * expected));
  }
  return file;
}

inline void save_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  write_file_atomic(path, encode_tensor_file(file));
}

inline TensorFile load_tensor_file(const std::filesystem::path& path) {
  return decode_tensor_file(read_file_bytes(path), path.string());
}

}  // namespace viewuq
