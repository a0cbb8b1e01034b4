#include "vitdp/frame.hpp"

#include "vitdp/errors.hpp"

namespace vitdp {

bool opcode_valid(uint8_t v) {
    return v >= static_cast<uint8_t>(Opcode::hello) && v <= static_cast<uint8_t>(Opcode::shutdown);
}

const char* opcode_name(Opcode op) {
    switch (op) {
        case Opcode::hello: return "HELLO";
        case Opcode::rank_assign: return "RANK_ASSIGN";
        case Opcode::barrier_arrive: return "BARRIER_ARRIVE";
        case Opcode::barrier_release: return "BARRIER_RELEASE";
        case Opcode::reduce_chunk: return "REDUCE_CHUNK";
        case Opcode::gather_chunk: return "GATHER_CHUNK";
        case Opcode::bcast: return "BCAST";
        case Opcode::shutdown: return "SHUTDOWN";
    }
    return "?";
}

void encode_frame_header(const Frame& f, uint8_t out[kFrameHeaderSize]) {
    out[0] = static_cast<uint8_t>(f.opcode);
    store_u32_le(out + 1, f.tag);
    store_u32_le(out + 5, f.chunk_index);
    store_u32_le(out + 9, static_cast<uint32_t>(f.payload.size()));
}

uint32_t decode_frame_header(const uint8_t in[kFrameHeaderSize], Frame& out) {
    if (!opcode_valid(in[0]))
        throw ProtocolError("bad opcode byte " + std::to_string(static_cast<int>(in[0])));
    out.opcode = static_cast<Opcode>(in[0]);
    out.tag = load_u32_le(in + 1);
    out.chunk_index = load_u32_le(in + 5);
    return load_u32_le(in + 9);
}

std::vector<uint8_t> floats_to_bytes(const float* data, size_t n) {
    std::vector<uint8_t> out(n * 4);
    for (size_t i = 0; i < n; ++i) store_f32_le(out.data() + i * 4, data[i]);
    return out;
}

void bytes_to_floats(const std::vector<uint8_t>& bytes, float* out, size_t n) {
    if (bytes.size() != n * 4)
        throw ProtocolError("float payload of " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(n * 4));
    for (size_t i = 0; i < n; ++i) out[i] = load_f32_le(bytes.data() + i * 4);
}

}  // namespace vitdp
