// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "hdit/error.hpp"

namespace hdit {

namespace {

constexpr char kMagic[4] = {'H', 'D', 'I', 'T'};

template <typename U>
void append_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U read_le(const std::uint8_t* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

template <typename F, typename U>
std::vector<std::uint8_t> encode(std::span<const F> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * sizeof(F));
  for (const F v : values) append_le(out, std::bit_cast<U>(v));
  return out;
}

std::size_t element_size(Checkpoint::Kind kind) { return kind == Checkpoint::Kind::f32 ? 4 : 8; }

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint truncated");
    const auto* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U next() {
    return read_le<U>(take(sizeof(U)));
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint::Entry& Checkpoint::slot(const std::string& name) {
  for (auto& e : entries_) {
    if (e.name == name) return e;
  }
  entries_.push_back(Entry{name, Kind::f32, {}, {}});
  return entries_.back();
}

void Checkpoint::put(const std::string& name, const Shape& shape, std::span<const float> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) throw ShapeError("checkpoint entry size mismatch");
  Entry& e = slot(name);
  e.kind = Kind::f32;
  e.shape = shape;
  e.bytes = encode<float, std::uint32_t>(values);
}

void Checkpoint::put(const std::string& name, const Shape& shape, std::span<const double> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) throw ShapeError("checkpoint entry size mismatch");
  Entry& e = slot(name);
  e.kind = Kind::f64;
  e.shape = shape;
  e.bytes = encode<double, std::uint64_t>(values);
}

void Checkpoint::put_int(const std::string& name, std::int64_t value) {
  Entry& e = slot(name);
  e.kind = Kind::i64;
  e.shape = {1};
  e.bytes.clear();
  append_le(e.bytes, static_cast<std::uint64_t>(value));
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw IoError("checkpoint has no entry '" + name + "'");
}

template <typename T>
std::vector<T> Checkpoint::get(const std::string& name, const Shape& expected) const {
  const Entry& e = entry(name);
  if (e.shape != expected) {
    throw IoError("checkpoint entry '" + name + "' has shape " + shape_str(e.shape) + ", expected " +
                  shape_str(expected));
  }
  const std::size_t n = static_cast<std::size_t>(shape_numel(e.shape));
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = e.bytes.data() + i * element_size(e.kind);
    switch (e.kind) {
      case Kind::f32: out[i] = static_cast<T>(std::bit_cast<float>(read_le<std::uint32_t>(p))); break;
      case Kind::f64: out[i] = static_cast<T>(std::bit_cast<double>(read_le<std::uint64_t>(p))); break;
      case Kind::i64: out[i] = static_cast<T>(static_cast<std::int64_t>(read_le<std::uint64_t>(p))); break;
    }
  }
  return out;
}

std::int64_t Checkpoint::get_int(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.kind != Kind::i64 || e.bytes.size() != 8) throw IoError("checkpoint entry '" + name + "' is not an integer");
  return static_cast<std::int64_t>(read_le<std::uint64_t>(e.bytes.data()));
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::vector<std::uint8_t> header(std::begin(kMagic), std::end(kMagic));
  append_le(header, kVersion);
  append_le(header, static_cast<std::uint32_t>(entries_.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries_) {
    append_le(header, static_cast<std::uint32_t>(e.name.size()));
    header.insert(header.end(), e.name.begin(), e.name.end());
    header.push_back(static_cast<std::uint8_t>(e.kind));
    append_le(header, static_cast<std::uint32_t>(e.shape.size()));
    for (const auto d : e.shape) append_le(header, static_cast<std::uint64_t>(d));
    append_le(header, offset);
    append_le(header, static_cast<std::uint64_t>(e.bytes.size()));
    offset += e.bytes.size();
  }
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    for (const auto& e : entries_) {
      out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(buf);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw IoError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.next<std::uint32_t>();
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.next<std::uint32_t>();
  struct Pending {
    std::uint64_t offset, size;
  };
  Checkpoint ckpt;
  std::vector<Pending> pending;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = r.next<std::uint32_t>();
    const auto* name = r.take(len);
    e.name.assign(reinterpret_cast<const char*>(name), len);
    const auto kind = r.next<std::uint8_t>();
    if (kind > 2) throw IoError("checkpoint entry '" + e.name + "' has unknown dtype");
    e.kind = static_cast<Kind>(kind);
    const auto rank = r.next<std::uint32_t>();
    if (rank > 8) throw IoError("checkpoint entry '" + e.name + "' has implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<std::int64_t>(r.next<std::uint64_t>()));
    const auto offset = r.next<std::uint64_t>();
    const auto size = r.next<std::uint64_t>();
    if (size != static_cast<std::uint64_t>(shape_numel(e.shape)) * element_size(e.kind)) {
      throw IoError("checkpoint entry '" + e.name + "' size does not match its shape");
    }
    pending.push_back({offset, size});
    ckpt.entries_.push_back(std::move(e));
  }
  const std::size_t base = r.pos();
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (base + pending[i].offset + pending[i].size > buf.size()) throw IoError("checkpoint payload truncated");
    const auto* p = buf.data() + base + pending[i].offset;
    ckpt.entries_[i].bytes.assign(p, p + pending[i].size);
  }
  return ckpt;
}

template <typename T>
void store_params(Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& params) {
  for (const auto& p : params) ckpt.put(prefix + p.name, p.tensor.shape(), p.tensor.data());
}

template <typename T>
void load_params(const Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& params) {
  for (const auto& p : params) {
    const auto values = ckpt.get<T>(prefix + p.name, p.tensor.shape());
    Tensor<T> t = p.tensor;
    std::copy(values.begin(), values.end(), t.data_mut().begin());
  }
}

template std::vector<float> Checkpoint::get<float>(const std::string&, const Shape&) const;
template std::vector<double> Checkpoint::get<double>(const std::string&, const Shape&) const;
template void store_params(Checkpoint&, const std::string&, const ParamList<float>&);
template void store_params(Checkpoint&, const std::string&, const ParamList<double>&);
template void load_params(const Checkpoint&, const std::string&, const ParamList<float>&);
template void load_params(const Checkpoint&, const std::string&, const ParamList<double>&);

}  // namespace hdit
