// checkpoint.hpp — bit-exact binary serialization of named tensor sets.
//
// Layout: 8-byte magic "MDCKPT1\n", uint64 LE header length, JSON header,
// then a little-endian float64 payload. The header lists each entry's name,
// shape, and element offset into the payload, plus optional JSON metadata
// (optimizer step, schedule position, ...). Entries are written in insertion
// order so identical inputs produce identical bytes.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/tensor.hpp"

namespace meshdeform {

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '1', '\n'};

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_le(std::ostream& os, const double* src, std::size_t count) {
  if (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(count * 8));
    return;
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &src[i], 8);
    write_u64_le(os, bits);
  }
}

inline void read_f64_le(std::istream& is, double* dst, std::size_t count) {
  if (host_is_little_endian()) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * 8));
    return;
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = read_u64_le(is);
    std::memcpy(&dst[i], &bits, 8);
  }
}

}  // namespace detail

// An ordered set of named tensors plus free-form JSON metadata.
class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> data;
  };

  void add(const std::string& name, Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("checkpoint entry '" + name + "': " +
                                  std::to_string(data.size()) + " values vs shape " +
                                  shape_str(shape));
    if (index_.count(name)) throw std::invalid_argument("duplicate checkpoint entry '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(shape), std::move(data)});
  }

  void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.data()); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  const Entry& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::invalid_argument("checkpoint has no entry '" + name + "'");
    return entries_[it->second];
  }

  Tensor tensor(const std::string& name, bool requires_grad = false) const {
    const Entry& e = get(name);
    return Tensor::from_data(e.shape, e.data, requires_grad);
  }

  // Copies stored values into an existing tensor (shape must match).
  void load_into(const std::string& name, Tensor& t) const {
    const Entry& e = get(name);
    if (e.shape != t.shape())
      throw std::invalid_argument("checkpoint entry '" + name + "' shape " + shape_str(e.shape) +
                                  " does not match tensor " + shape_str(t.shape()));
    t.mutable_data() = e.data;
  }

  nlohmann::json metadata;

  void save(const std::string& path) const {
    nlohmann::json header;
    header["entries"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const Entry& e : entries_) {
      nlohmann::json item;
      item["name"] = e.name;
      item["shape"] = e.shape;
      item["offset"] = offset;
      header["entries"].push_back(item);
      offset += e.data.size();
    }
    header["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
    std::string header_text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(detail::kCheckpointMagic, 8);
    detail::write_u64_le(os, header_text.size());
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const Entry& e : entries_) detail::write_f64_le(os, e.data.data(), e.data.size());
    if (!os) throw std::runtime_error("write failure on checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
      throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t header_len = detail::read_u64_le(is);
    std::string header_text(header_len, '\0');
    is.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(header_text);

    Checkpoint ck;
    ck.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& item : header.at("entries")) {
      Shape shape = item.at("shape").get<Shape>();
      std::vector<double> data(shape_numel(shape));
      detail::read_f64_le(is, data.data(), data.size());
      if (!is) throw std::runtime_error("truncated checkpoint payload: " + path);
      ck.add(item.at("name").get<std::string>(), std::move(shape), std::move(data));
    }
    return ck;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace meshdeform
