#pragma once

#include <stdexcept>
#include <string>

namespace vitdp {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreement (matmul inner dims, elementwise mismatch, ...).
struct ShapeError : Error {
    using Error::Error;
};

// Bad caller-supplied values: out-of-range label, image dims vs config, ...
struct InputError : Error {
    using Error::Error;
};

// An op produced NaN/Inf from finite inputs, or a tensor invariant broke.
struct NumericError : Error {
    using Error::Error;
};

// Invalid configuration (batch identity, divisibility, sweep spec, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Rejected configuration feature (fp16 enabled, zero stage > 0).
struct UnsupportedError : Error {
    using Error::Error;
};

// Malformed dataset / checkpoint file.
struct FormatError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, missing baseline row, empty world list).
struct UsageError : Error {
    using Error::Error;
};

// Worker set never formed (timeout, rejected duplicate connection).
struct RendezvousError : Error {
    using Error::Error;
};

// Frame-level disagreement between ranks (opcode, tag, payload length).
struct ProtocolError : Error {
    using Error::Error;
};

// Socket/pipe failure or I/O timeout mid-collective.
struct TransportError : Error {
    using Error::Error;
};

// Barrier timed out; message names the missing ranks.
struct DeadlockError : Error {
    using Error::Error;
};

// A spawned worker process crashed or hung; message names rank and status.
struct HarnessError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace vitdp
