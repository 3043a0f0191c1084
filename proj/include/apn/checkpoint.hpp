#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apn/nn.hpp"

namespace apn {

// Binary layout, all integers little-endian:
//   "APNCKPT1", u32 count, then per tensor
//   u32 name_len, name bytes, u8 dtype (0 = f32, 1 = f64), u32 rank,
//   u32 dims[rank], raw payload.
template <typename T>
std::vector<std::uint8_t> serialize_state(const std::vector<NamedTensor<T>>& state);

// Restores `state` in place. Every stored tensor must match the target's name,
// dtype and dims in order; the error names the first offender.
template <typename T>
void deserialize_state(const std::vector<std::uint8_t>& bytes, const std::vector<NamedTensor<T>>& state);

template <typename T>
void save_checkpoint(ParameterStore<T>& store, const std::string& path);
template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace apn
