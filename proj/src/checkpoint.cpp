#include "bggan/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace bggan {

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

// floats are stored little-endian; byte-swap on big-endian hosts
void to_le(std::vector<unsigned char>& bytes) {
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i + 3 < bytes.size(); i += 4) {
            std::swap(bytes[i], bytes[i + 3]);
            std::swap(bytes[i + 1], bytes[i + 2]);
        }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> payload;
    std::ostringstream manifest;
    manifest << kCheckpointVersion << "\n";
    for (const auto& [k, v] : ckpt.meta) manifest << "meta " << k << " " << v << "\n";

    for (const auto& [name, t] : ckpt.arrays) {
        std::size_t offset = payload.size();
        std::size_t nbytes = std::size_t(t.numel()) * 4;
        std::vector<unsigned char> bytes(nbytes);
        std::memcpy(bytes.data(), t.data.data(), nbytes);
        to_le(bytes);
        manifest << "array " << name << " " << t.shape[0] << " " << t.shape[1] << " "
                 << t.shape[2] << " " << t.shape[3] << " f32 " << offset << " "
                 << hex32(crc32(bytes.data(), nbytes)) << "\n";
        payload.insert(payload.end(), bytes.begin(), bytes.end());
    }
    manifest << "data " << payload.size() << "\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    const std::string head = manifest.str();
    out.write(head.data(), std::streamsize(head.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoError("checkpoint truncated in version line: " + path);
    if (line != kCheckpointVersion)
        throw IoError("checkpoint version mismatch: file has \"" + line + "\", expected \"" +
                      kCheckpointVersion + "\"");

    Checkpoint ckpt;
    struct Entry {
        std::string name;
        Shape4 shape;
        std::size_t offset;
        std::uint32_t crc;
    };
    std::vector<Entry> entries;
    std::size_t payload_size = 0;
    bool saw_data = false;

    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string key;
            ls >> key;
            if (key.empty()) throw IoError("checkpoint: malformed meta line: " + line);
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (tag == "array") {
            Entry e;
            std::string dtype, crc_hex;
            ls >> e.name >> e.shape[0] >> e.shape[1] >> e.shape[2] >> e.shape[3] >> dtype >>
                e.offset >> crc_hex;
            if (!ls || dtype != "f32")
                throw IoError("checkpoint: malformed array line: " + line);
            e.crc = std::uint32_t(std::stoul(crc_hex, nullptr, 16));
            entries.push_back(e);
        } else if (tag == "data") {
            ls >> payload_size;
            if (!ls) throw IoError("checkpoint: malformed data line: " + line);
            saw_data = true;
            break;
        } else {
            throw IoError("checkpoint: unknown manifest tag \"" + tag + "\"");
        }
    }
    if (!saw_data) throw IoError("checkpoint truncated in manifest (no data line): " + path);

    std::vector<unsigned char> payload(payload_size);
    in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload_size));
    if (std::size_t(in.gcount()) != payload_size)
        throw IoError("checkpoint truncated in data section: expected " +
                      std::to_string(payload_size) + " bytes, got " +
                      std::to_string(in.gcount()));

    for (const auto& e : entries) {
        std::size_t nbytes = std::size_t(shape_numel(e.shape)) * 4;
        if (e.offset + nbytes > payload_size)
            throw IoError("checkpoint: array " + e.name + " extends past the data section");
        std::vector<unsigned char> bytes(payload.begin() + e.offset,
                                         payload.begin() + e.offset + nbytes);
        if (crc32(bytes.data(), nbytes) != e.crc)
            throw IoError("checkpoint: checksum mismatch in array " + e.name);
        to_le(bytes);  // back to host order
        Tensor4f t(e.shape);
        std::memcpy(t.data.data(), bytes.data(), nbytes);
        ckpt.arrays.emplace(e.name, std::move(t));
    }
    return ckpt;
}

}  // namespace bggan
