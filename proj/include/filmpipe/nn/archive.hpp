#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace filmpipe::nn {

/// Named numeric arrays plus a JSON metadata block, stored in one file:
///
///   "FPARCHV1" | u64 little-endian header length | JSON header | payload
///
/// The header lists every array as {name, dtype, shape, offset, nbytes}
/// with offsets relative to the payload start. dtype is "f32" or "f64".
class Archive {
 public:
  struct Entry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<unsigned char> bytes;
    [[nodiscard]] std::size_t count() const;
  };

  nlohmann::json meta = nlohmann::json::object();

  void put(const std::string& name, const std::vector<float>& values,
           std::vector<std::int64_t> shape);
  void put(const std::string& name, const std::vector<double>& values,
           std::vector<std::int64_t> shape);

  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] const Entry& entry(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> names() const;

  /// Converts from the stored dtype. Throws IoError if the name is missing
  /// or, when expected_shape is given, the shape differs.
  template <typename T>
  [[nodiscard]] std::vector<T> get(const std::string& name,
                                   const std::vector<std::int64_t>* expected_shape = nullptr) const;

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

}  // namespace filmpipe::nn
