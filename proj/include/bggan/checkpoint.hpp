#pragma once

#include "bggan/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace bggan {

inline constexpr const char* kCheckpointVersion = "bggan-ckpt-1";

// Plain-text manifest (version, meta lines, array directory) followed by raw
// little-endian float32 payload. Maps keep ordering deterministic so
// save -> load -> save is byte-identical.
struct Checkpoint {
    std::map<std::string, std::string> meta;     // free-form key -> rest-of-line
    std::map<std::string, Tensor4f> arrays;

    const Tensor4f& array(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw IoError("checkpoint: missing array " + name);
        return it->second;
    }
    const std::string& meta_at(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw IoError("checkpoint: missing meta key " + key);
        return it->second;
    }
};

std::uint32_t crc32(const unsigned char* data, std::size_t n);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bggan
