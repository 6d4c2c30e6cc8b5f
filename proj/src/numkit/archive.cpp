#include "pop/numkit/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pop/core/error.hpp"

namespace pop::nk {

namespace {

constexpr std::string_view kMagic = "TARC";

void append_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char buf[4];
  std::memcpy(buf, &bits, 4);
  out.append(buf, 4);
}

float read_le(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

bool valid_name(const std::string& name) {
  return !name.empty() && std::none_of(name.begin(), name.end(), [](char c) {
    return c == ' ' || c == '\n' || c == '\t' || c == '\r';
  });
}

}  // namespace

void TensorArchive::put(const std::string& name, Shape shape, std::span<const float> values) {
  if (!valid_name(name)) throw std::invalid_argument("archive entry name must be non-empty without whitespace");
  if (numel(shape) != values.size()) throw DimensionError("archive entry '" + name + "' shape/data mismatch");
  Entry e{name, std::move(shape), std::vector<float>(values.begin(), values.end())};
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& x) { return x.name == name; });
  if (it != entries_.end()) {
    *it = std::move(e);
  } else {
    entries_.push_back(std::move(e));
  }
}

template <typename T>
void TensorArchive::put(const std::string& name, const Tensor<T>& tensor) {
  std::vector<float> v(tensor.data().begin(), tensor.data().end());
  put(name, tensor.shape(), v);
}

bool TensorArchive::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

const TensorArchive::Entry& TensorArchive::get(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  if (it == entries_.end()) throw std::out_of_range("archive has no entry '" + name + "'");
  return *it;
}

template <typename T>
Tensor<T> TensorArchive::tensor(const std::string& name, bool requires_grad) const {
  const Entry& e = get(name);
  return Tensor<T>::from_vector(e.shape, std::vector<T>(e.values.begin(), e.values.end()), requires_grad);
}

float TensorArchive::scalar(const std::string& name) const {
  const Entry& e = get(name);
  if (e.values.size() != 1) throw DimensionError("archive entry '" + name + "' is not a scalar");
  return e.values[0];
}

std::string TensorArchive::serialize() const {
  std::ostringstream index;
  index << kMagic << '\n' << entries_.size() << '\n';
  for (const auto& e : entries_) {
    index << e.name << " f32 " << e.shape.size();
    for (auto d : e.shape) index << ' ' << d;
    index << '\n';
  }
  std::string out = index.str();
  for (const auto& e : entries_) {
    for (float v : e.values) append_le(out, v);
  }
  return out;
}

TensorArchive TensorArchive::deserialize(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("TARC: truncated index");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) throw FormatError("TARC: bad magic");
  std::size_t count = 0;
  {
    std::istringstream is(next_line());
    if (!(is >> count)) throw FormatError("TARC: bad entry count");
  }
  TensorArchive ar;
  std::vector<Entry> index;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream is(next_line());
    Entry e;
    std::string dtype;
    std::size_t rank = 0;
    if (!(is >> e.name >> dtype >> rank) || dtype != "f32") throw FormatError("TARC: bad index line " + e.name);
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(is >> d)) throw FormatError("TARC: bad shape for " + e.name);
    }
    index.push_back(std::move(e));
  }
  for (auto& e : index) {
    const std::size_t n = numel(e.shape);
    if (bytes.size() - pos < n * 4) throw FormatError("TARC: truncated payload for " + e.name);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) e.values[i] = read_le(bytes.data() + pos + 4 * i);
    pos += 4 * n;
  }
  if (pos != bytes.size()) throw FormatError("TARC: trailing bytes after payload");
  ar.entries_ = std::move(index);
  return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = serialize();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

template void TensorArchive::put(const std::string&, const Tensor<float>&);
template void TensorArchive::put(const std::string&, const Tensor<double>&);
template Tensor<float> TensorArchive::tensor(const std::string&, bool) const;
template Tensor<double> TensorArchive::tensor(const std::string&, bool) const;

}  // namespace pop::nk
