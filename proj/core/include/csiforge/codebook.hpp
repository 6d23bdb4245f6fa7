/**
 * @file codebook.hpp
 * @brief Type-I / Type-II DFT codebook encoder and decoder, bit packing and
 * subband bookkeeping.
 *
 * Packed Type-II field order (MSB first):
 *   rotation            ceil(log2 O) bits
 *   beam combination    ceil(log2 C(N_t, L)) bits, lexicographic rank
 *   strongest beam      ceil(log2 L) bits, position inside the sorted set
 *   wideband amplitudes (L-1) x 3 bits, non-strongest beams in set order
 *   subband amplitudes  N_SB x (L-1) x 1 bit
 *   subband phases      N_SB x (L-1) x 3 bits
 * Type-I carries a single ceil(log2(O*N_t))-bit beam index.
 * Bitstrings are byte aligned, zero padded in the last byte.
 */
#pragma once

#include "csiforge/common.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace csiforge::codebook {

struct TypeIConfig {
  int oversampling = 1;  ///< {1, 2, 4}
  bool operator==(const TypeIConfig&) const = default;
};

struct TypeIIConfig {
  int oversampling = 4;
  int n_beams = 2;     ///< L, {2, 3, 4}; 1 accepted as a degenerate case
  int n_subbands = 2;  ///< N_SB
  bool operator==(const TypeIIConfig&) const = default;
};

inline constexpr int kWidebandAmpBits = 3;
inline constexpr int kSubbandPhaseBits = 3;
inline constexpr int kSubbandAmpBits = 1;

using CodebookConfig = std::variant<TypeIConfig, TypeIIConfig>;

struct TypeIReport {
  int beam_index = 0;  ///< O * beam + rotation, in [0, O*N_t)
  bool operator==(const TypeIReport&) const = default;
};

struct TypeIIReport {
  int rotation = 0;
  std::uint64_t beam_combo = 0;
  int strongest = 0;
  std::vector<int> wideband_amp;   ///< L-1 codes in [0, 8)
  std::vector<int> subband_amp;    ///< N_SB*(L-1) codes in {0, 1}, subband-major
  std::vector<int> subband_phase;  ///< N_SB*(L-1) codes in [0, 8), subband-major
  bool operator==(const TypeIIReport&) const = default;
};

using CsiReport = std::variant<TypeIReport, TypeIIReport>;

/// Contiguous, maximally equal split of K subcarriers into N_SB subbands.
struct SubbandMap {
  int n_subcarriers = 0;
  int n_subbands = 0;
  std::vector<int> subband_of;  ///< length K
  std::vector<int> first;       ///< length N_SB + 1, subband s = [first[s], first[s+1])

  static SubbandMap even(int n_subcarriers, int n_subbands);
  int size(int s) const { return first[s + 1] - first[s]; }
};

struct BitString {
  std::vector<std::uint8_t> bytes;
  int n_bits = 0;
  bool operator==(const BitString&) const = default;
};

/// Throws ConfigError naming the allowed values.
void validate(const CodebookConfig& cfg, int n_tx);

/// Short tag such as "typeI-O4" or "typeII-O4-L2-SB2".
std::string tag(const CodebookConfig& cfg);

/// exp(j 2 pi n (beam + rotation/O) / N_t) / sqrt(N_t).
CVec dft_beam(int beam_index, int rotation_index, int oversampling, int n_tx);

// Amplitude alphabets. Wideband: code 0 -> 0, code c -> sqrt(2^-(7-c)).
// Subband: code 0 -> sqrt(0.5), code 1 -> 1.
double wideband_amplitude(int code);
double subband_amplitude(int code);
int quantize_wideband_amplitude(double ratio);
int quantize_subband_amplitude(double ratio);
int quantize_phase(double radians);  ///< 8-PSK, nearest

std::uint64_t binomial(int n, int k);
std::uint64_t combination_rank(const std::vector<int>& sorted_beams, int n);
std::vector<int> combination_unrank(std::uint64_t rank, int n, int k);

/// Picks the oversampled beam maximizing sum_k |b^H h_k|^2.
TypeIReport typeI_encode(const CMat& h_est, const TypeIConfig& cfg);
/// N_t x N_SB, every column the selected beam.
CMat typeI_decode(const TypeIReport& report, const TypeIConfig& cfg, int n_tx,
                  int n_subbands);

TypeIIReport typeII_encode(const CMat& h_est, const TypeIIConfig& cfg,
                           const SubbandMap& map);
/// W = W1 * Wc1 * Wc2 * Lambda, N_t x N_SB with unit-norm columns.
CMat typeII_decode(const TypeIIReport& report, const TypeIIConfig& cfg, int n_tx);

/// Beams of a Type-II report in sorted order.
std::vector<int> typeII_beams(const TypeIIReport& report, int n_tx, int n_beams);

int overhead_bits(const CodebookConfig& cfg, int n_tx);

BitString pack_bits(const CsiReport& report, const CodebookConfig& cfg, int n_tx);
/// Throws DataFormatError on length mismatch or out-of-range fields.
CsiReport unpack_bits(const BitString& bits, const CodebookConfig& cfg, int n_tx);

/// Encode with either codebook. Type-I ignores `map`.
CsiReport encode(const CMat& h_est, const CodebookConfig& cfg, const SubbandMap& map);

/// Subcarrier-level reconstruction (N_t x K) of a report.
CMat decode_to_subcarriers(const CsiReport& report, const CodebookConfig& cfg,
                           int n_tx, const SubbandMap& map);

/// Column k of the result is column map.subband_of[k] of `w`.
CMat subband_to_subcarrier(const CMat& w, const SubbandMap& map);

/// Per-subband mean of the columns of an N_t x K matrix.
CMat subband_average(const CMat& h, const SubbandMap& map);

/// The map a codebook config implies for K subcarriers (Type-I: one subband).
SubbandMap subband_map_for(const CodebookConfig& cfg, int n_subcarriers);

/// Human-readable field dump used by `csiforge encode-debug`.
std::string describe(const CsiReport& report, const CodebookConfig& cfg, int n_tx);

}  // namespace csiforge::codebook
