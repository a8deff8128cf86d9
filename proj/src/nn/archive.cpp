#include "filmpipe/nn/archive.hpp"

#include <cstring>
#include <fstream>

#include "filmpipe/core/error.hpp"

namespace filmpipe::nn {

namespace {

constexpr char kMagic[8] = {'F', 'P', 'A', 'R', 'C', 'H', 'V', '1'};

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += (i ? "," : "") + std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
Archive::Entry make_entry(const std::vector<T>& values, std::vector<std::int64_t> shape,
                          const char* dtype) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    n *= d;
  }
  if (static_cast<std::size_t>(n) != values.size()) {
    throw InvalidInputError("archive: shape " + shape_str(shape) + " does not match " +
                            std::to_string(values.size()) + " values");
  }
  Archive::Entry e{dtype, std::move(shape), {}};
  e.bytes.resize(values.size() * sizeof(T));
  std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
  return e;
}

}  // namespace

std::size_t Archive::Entry::count() const {
  return bytes.size() / (dtype == "f64" ? sizeof(double) : sizeof(float));
}

void Archive::put(const std::string& name, const std::vector<float>& values,
                  std::vector<std::int64_t> shape) {
  if (!entries_.contains(name)) {
    order_.push_back(name);
  }
  entries_[name] = make_entry(values, std::move(shape), "f32");
}

void Archive::put(const std::string& name, const std::vector<double>& values,
                  std::vector<std::int64_t> shape) {
  if (!entries_.contains(name)) {
    order_.push_back(name);
  }
  entries_[name] = make_entry(values, std::move(shape), "f64");
}

bool Archive::contains(const std::string& name) const { return entries_.contains(name); }

const Archive::Entry& Archive::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw IoError("archive: missing array '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> Archive::names() const { return order_; }

template <typename T>
std::vector<T> Archive::get(const std::string& name,
                            const std::vector<std::int64_t>* expected_shape) const {
  const Entry& e = entry(name);
  if (expected_shape != nullptr && *expected_shape != e.shape) {
    throw IoError("archive: array '" + name + "' has shape " + shape_str(e.shape) +
                  ", expected " + shape_str(*expected_shape));
  }
  std::vector<T> out(e.count());
  if (e.dtype == "f64") {
    const auto* src = reinterpret_cast<const double*>(e.bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<T>(src[i]);
    }
  } else {
    const auto* src = reinterpret_cast<const float*>(e.bytes.data());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<T>(src[i]);
    }
  }
  return out;
}

template std::vector<float> Archive::get<float>(const std::string&,
                                                const std::vector<std::int64_t>*) const;
template std::vector<double> Archive::get<double>(const std::string&,
                                                  const std::vector<std::int64_t>*) const;

void Archive::save(const std::filesystem::path& path) const {
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const std::string& name : order_) {
    const Entry& e = entries_.at(name);
    arrays.push_back({{"name", name},
                      {"dtype", e.dtype},
                      {"shape", e.shape},
                      {"offset", offset},
                      {"nbytes", e.bytes.size()}});
    offset += e.bytes.size();
  }
  const std::string header = nlohmann::json{{"meta", meta}, {"arrays", arrays}}.dump();

  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    out.write(kMagic, sizeof(kMagic));
    unsigned char len[8];
    std::uint64_t n = header.size();
    for (int i = 0; i < 8; ++i) {
      len[i] = static_cast<unsigned char>(n >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(len), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const std::string& name : order_) {
      const Entry& e = entries_.at(name);
      out.write(reinterpret_cast<const char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Archive Archive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  char magic[8];
  unsigned char len[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path.string() + ": not a filmpipe archive");
  }
  if (!in.read(reinterpret_cast<char*>(len), 8)) {
    throw IoError(path.string() + ": truncated header");
  }
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) {
    n |= static_cast<std::uint64_t>(len[i]) << (8 * i);
  }
  const auto file_size = std::filesystem::file_size(path);
  if (n > file_size) {
    throw IoError(path.string() + ": corrupt header length");
  }
  std::string header(n, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(n))) {
    throw IoError(path.string() + ": truncated header");
  }
  const std::uint64_t payload_start = 16 + n;

  Archive ar;
  try {
    const nlohmann::json j = nlohmann::json::parse(header);
    ar.meta = j.at("meta");
    for (const auto& a : j.at("arrays")) {
      Entry e;
      e.dtype = a.at("dtype").get<std::string>();
      if (e.dtype != "f32" && e.dtype != "f64") {
        throw IoError(path.string() + ": unsupported dtype " + e.dtype);
      }
      e.shape = a.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      const auto nbytes = a.at("nbytes").get<std::uint64_t>();
      if (payload_start + offset + nbytes > file_size) {
        throw IoError(path.string() + ": truncated payload");
      }
      std::int64_t count = 1;
      for (std::int64_t d : e.shape) {
        count *= d;
      }
      const std::size_t width = e.dtype == "f64" ? 8 : 4;
      if (static_cast<std::uint64_t>(count) * width != nbytes) {
        throw IoError(path.string() + ": array size does not match its shape");
      }
      e.bytes.resize(nbytes);
      in.seekg(static_cast<std::streamoff>(payload_start + offset));
      if (!in.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(nbytes))) {
        throw IoError(path.string() + ": truncated payload");
      }
      const std::string name = a.at("name").get<std::string>();
      ar.order_.push_back(name);
      ar.entries_[name] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": corrupt header: " + e.what());
  }
  return ar;
}

}  // namespace filmpipe::nn
