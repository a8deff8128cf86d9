#include "filmpipe/core/hash.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "filmpipe/core/error.hpp"

namespace filmpipe {

std::string Fnv1a64::hex() const {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(state_));
  return std::string(buf.data(), 16);
}

std::string fingerprint(std::string_view text) {
  Fnv1a64 h;
  h.update(text);
  return h.hex();
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  Fnv1a64 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h.update(std::as_bytes(std::span(buf.data(), n)));
  }
  return h.hex();
}

}  // namespace filmpipe
