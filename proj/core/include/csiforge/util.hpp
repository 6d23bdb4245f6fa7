#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace csiforge::util {

/// CRC-32 (IEEE 802.3), continuing from `crc`.
std::uint32_t crc32(std::span<const std::uint8_t> data, std::uint32_t crc = 0);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);

/// Hex SHA-1 of `text` hashed as a git blob ("blob <len>\0<text>").
std::string git_blob_hash(std::string_view text);

/// Worker cap from CSIFORGE_THREADS (default 1).
int thread_budget();

/// Keeps large activation buffers on the heap instead of fresh zero pages
/// (glibc only; a no-op elsewhere). Call once at program start.
void tune_allocator();

}  // namespace csiforge::util
