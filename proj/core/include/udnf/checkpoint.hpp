#pragma once

// Binary checkpoint container: magic "UDNF", version, config snapshot, named
// 32-bit-float arrays (parameters and optimizer moments), named integer
// counters, and the serialized rng state. Little-endian, bit-exact round
// trips.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "udnf/tensor.hpp"

namespace udnf {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr std::uint32_t current_version = 1;

  std::uint32_t version = current_version;
  std::string config_text;
  std::vector<NamedArray> arrays;
  std::map<std::string, std::int64_t> counters;  // iteration, adam steps, ...
  std::string rng_state;

  void add_tensor(const std::string& name, const Tensor& t) {
    NamedArray a;
    a.name = name;
    a.dims = t.shape();
    a.data.assign(t.data(), t.data() + t.numel());
    arrays.push_back(std::move(a));
  }

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }

  // Copies a stored array into an existing tensor (shape must match).
  void load_into(const std::string& name, Tensor& t) const {
    const auto* a = find(name);
    if (!a) throw DataError("checkpoint: missing array " + name);
    if (a->dims != t.shape() || std::int64_t(a->data.size()) != t.numel())
      throw DataError("checkpoint: shape mismatch for " + name);
    std::copy(a->data.begin(), a->data.end(), t.data());
  }
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));  // host is little-endian (x86)
  out.append(buf, sizeof(T));
}

inline void put_str(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  Reader(const std::string& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::uint64_t n) {
    if (pos_ + n > buf_.size()) throw DataError("checkpoint: truncated file");
  }

 private:
  const std::string& buf_;
  std::uint64_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out = "UDNF";
  detail::put<std::uint32_t>(out, ck.version);
  detail::put_str(out, ck.config_text);
  detail::put<std::uint64_t>(out, ck.arrays.size());
  for (const auto& a : ck.arrays) {
    detail::put<std::uint32_t>(out, std::uint32_t(a.name.size()));
    out += a.name;
    detail::put<std::uint32_t>(out, std::uint32_t(a.dims.size()));
    for (auto d : a.dims) detail::put<std::int64_t>(out, d);
    std::int64_t n = 1;
    for (auto d : a.dims) n *= d;
    if (n != std::int64_t(a.data.size()))
      throw DataError("checkpoint: dims of " + a.name + " disagree with data");
    const size_t bytes = a.data.size() * sizeof(float);
    const size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, a.data.data(), bytes);
  }
  detail::put<std::uint64_t>(out, ck.counters.size());
  for (const auto& [k, v] : ck.counters) {
    detail::put_str(out, k);
    detail::put<std::int64_t>(out, v);
  }
  detail::put_str(out, ck.rng_state);
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& buf) {
  if (buf.size() < 4 || buf.compare(0, 4, "UDNF") != 0)
    throw DataError("checkpoint: bad magic");
  const std::string body = buf.substr(4);
  detail::Reader r(body);
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != Checkpoint::current_version)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(ck.version));
  ck.config_text = r.get_str();
  const auto n_arrays = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    const auto name_len = r.get<std::uint32_t>();
    r.need(name_len);
    for (std::uint32_t c = 0; c < name_len; ++c) a.name += r.get<char>();
    const auto rank = r.get<std::uint32_t>();
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.dims.push_back(r.get<std::int64_t>());
      n *= a.dims.back();
    }
    if (n < 0) throw DataError("checkpoint: negative array size");
    a.data.resize(size_t(n));
    for (auto& f : a.data) f = r.get<float>();
    ck.arrays.push_back(std::move(a));
  }
  const auto n_counters = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_counters; ++i) {
    const auto key = r.get_str();
    ck.counters[key] = r.get<std::int64_t>();
  }
  ck.rng_state = r.get_str();
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw DataError("checkpoint: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(buf);
}

}  // namespace udnf
