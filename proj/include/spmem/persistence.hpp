#pragma once
// Versioned binary store files.
//
// Layout (little-endian, IEEE-754 doubles):
//   "M4NV" | u16 version | u64 file length | config | u8 feature flags
//   | rev params | decoders | leaves | graph nodes | graph edges
//   | current node | STM entries | u64 step | u32 CRC-32 of every preceding byte
//
// The HNSW index is not stored; it is rebuilt on load. See README.md for the
// per-record layout.

#include <cstdint>
#include <string>
#include <vector>

#include "spmem/memory_store.hpp"

namespace spmem {

inline constexpr std::uint16_t kStoreFormatVersion = 1;

std::vector<std::uint8_t> serialize_store(const MemoryStore& store);
MemoryStore deserialize_store(const std::vector<std::uint8_t>& bytes);

struct LoadReport {
    std::size_t bytes = 0;
    std::size_t verify_queries = 0;
    double recall = 1.0;  // rebuilt index vs linear scan on sampled token states
};

// Returns the number of bytes written.
std::size_t save_store(const MemoryStore& store, const std::string& path);
// verify_samples token states (evenly spaced over the index) are replayed as
// queries against the rebuilt index; 0 skips the check.
MemoryStore load_store(const std::string& path, std::size_t verify_samples = 32, LoadReport* report = nullptr);

// CRC-32 (IEEE, as used by zlib).
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

}  // namespace spmem
