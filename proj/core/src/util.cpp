#include "csiforge/util.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace csiforge::util {

std::uint32_t crc32(std::span<const std::uint8_t> data, std::uint32_t crc) {
  uLong c = crc;
  std::size_t offset = 0;
  while (offset < data.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(data.size() - offset, 1u << 30));
    c = ::crc32(c, data.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string git_blob_hash(std::string_view text) {
  const std::string header = "blob " + std::to_string(text.size()) + '\0';
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, text.data(), text.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

int thread_budget() {
  const char* env = std::getenv("CSIFORGE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace csiforge::util
