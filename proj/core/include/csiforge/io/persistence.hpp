/**
 * @file persistence.hpp
 * @brief Binary dataset and checkpoint files.
 *
 * Dataset ("CSIF"), all integers and floats little-endian:
 *   magic[4] version:u32 n_tx:u32 n_subcarriers:u32 n_taps:u32 n_users:u32
 *   n_samples:u64 scenario_hash:u64
 *   per record: scenario_id:u64 sample_index:u64, then per user the taps
 *   (D x N_t), the true response (N_t x K) and the estimate (N_t x K), each
 *   column-major as interleaved (re, im) float64
 *   crc32:u32 over every preceding byte
 * A sidecar `<file>.json` holds the full scenario.
 *
 * Checkpoint ("CSIW"):
 *   magic[4] version:u32 scheme:str codebook:str kind:u32
 *   refiner descriptor: n_users n_blocks hidden1 hidden2 (u32 each)
 *   encoder-decoder descriptor (kind 1 only): n_tx n_subcarriers bits
 *   n_widths widths... (u32 each)
 *   n_params:u64, parameters as float64 in params() order, crc32:u32
 * Strings are u32 length + bytes.
 */
#pragma once

#include "csiforge/channel.hpp"
#include "csiforge/training.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace csiforge::io {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_dataset(const channel::Dataset& ds,
                                         std::uint32_t version = kDatasetVersion);
/// Throws DataFormatError naming the failure: magic, version (both numbers),
/// length or CRC.
channel::Dataset decode_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const channel::Dataset& ds, const std::filesystem::path& path,
                  const channel::ScenarioConfig& scenario);
channel::Dataset load_dataset(const std::filesystem::path& path);
/// Scenario from the sidecar written by save_dataset.
channel::ScenarioConfig load_dataset_scenario(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_decoder(const training::Decoder& decoder,
                                         std::uint32_t version = kCheckpointVersion);
training::Decoder decode_decoder(std::span<const std::uint8_t> bytes);

void save_decoder(const training::Decoder& decoder, const std::filesystem::path& path);
training::Decoder load_decoder(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace csiforge::io
