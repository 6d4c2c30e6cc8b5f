#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pop/numkit/tensor.hpp"

namespace pop::nk {

// Named float32 tensors in a "TARC" container: magic line, entry count line,
// one text index line per entry ("name f32 rank d0 d1 ..."), then the raw
// little-endian payloads in index order.
class TensorArchive {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };

  void put(const std::string& name, Shape shape, std::span<const float> values);
  template <typename T>
  void put(const std::string& name, const Tensor<T>& tensor);

  bool contains(const std::string& name) const;
  const Entry& get(const std::string& name) const;
  // Copy of an entry as a fresh leaf tensor.
  template <typename T>
  Tensor<T> tensor(const std::string& name, bool requires_grad = false) const;
  // Single-value convenience for metadata entries.
  float scalar(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }

  std::string serialize() const;
  static TensorArchive deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace pop::nk
