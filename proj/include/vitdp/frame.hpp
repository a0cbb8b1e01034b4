#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace vitdp {

enum class Opcode : uint8_t {
    hello = 1,
    rank_assign = 2,
    barrier_arrive = 3,
    barrier_release = 4,
    reduce_chunk = 5,
    gather_chunk = 6,
    bcast = 7,
    shutdown = 8,
};

bool opcode_valid(uint8_t v);
const char* opcode_name(Opcode op);

// Header: opcode u8, tag u32, chunk_index u32, payload_len u32, little-endian.
constexpr size_t kFrameHeaderSize = 13;

struct Frame {
    Opcode opcode = Opcode::hello;
    uint32_t tag = 0;
    uint32_t chunk_index = 0;
    std::vector<uint8_t> payload;

    size_t wire_size() const { return kFrameHeaderSize + payload.size(); }
};

inline void store_u32_le(uint8_t* p, uint32_t v) {
    p[0] = static_cast<uint8_t>(v);
    p[1] = static_cast<uint8_t>(v >> 8);
    p[2] = static_cast<uint8_t>(v >> 16);
    p[3] = static_cast<uint8_t>(v >> 24);
}

inline uint32_t load_u32_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline void store_u64_le(uint8_t* p, uint64_t v) {
    store_u32_le(p, static_cast<uint32_t>(v));
    store_u32_le(p + 4, static_cast<uint32_t>(v >> 32));
}

inline uint64_t load_u64_le(const uint8_t* p) {
    return static_cast<uint64_t>(load_u32_le(p)) |
           (static_cast<uint64_t>(load_u32_le(p + 4)) << 32);
}

inline void store_f32_le(uint8_t* p, float v) { store_u32_le(p, std::bit_cast<uint32_t>(v)); }
inline float load_f32_le(const uint8_t* p) { return std::bit_cast<float>(load_u32_le(p)); }

void encode_frame_header(const Frame& f, uint8_t out[kFrameHeaderSize]);

// Parses a header; returns payload length. Throws ProtocolError on a bad opcode.
uint32_t decode_frame_header(const uint8_t in[kFrameHeaderSize], Frame& out);

std::vector<uint8_t> floats_to_bytes(const float* data, size_t n);
void bytes_to_floats(const std::vector<uint8_t>& bytes, float* out, size_t n);

}  // namespace vitdp
