#include "diver/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace diver {

size_t NamedTensor::elem_count() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (t == nullptr) throw std::runtime_error("checkpoint has no tensor named '" + name + "'");
    return *t;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json table = nlohmann::json::array();
    size_t offset = 0;
    for (const NamedTensor& t : ckpt.tensors) {
        if (t.data.size() != t.elem_count())
            throw std::runtime_error("tensor '" + t.name + "' has " + std::to_string(t.data.size()) +
                                     " values but shape implies " + std::to_string(t.elem_count()));
        table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.data.size() * sizeof(double);
    }
    nlohmann::json header = {{"meta", ckpt.meta}, {"tensors", table}};
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    uint32_t hlen = uint32_t(hs.size());
    unsigned char lenb[4] = {
        (unsigned char)(hlen & 0xff), (unsigned char)((hlen >> 8) & 0xff),
        (unsigned char)((hlen >> 16) & 0xff), (unsigned char)((hlen >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(lenb), 4);
    out.write(hs.data(), std::streamsize(hs.size()));
    // Doubles are written verbatim; we assume a little-endian host (checked in tests).
    for (const NamedTensor& t : ckpt.tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  std::streamsize(t.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    unsigned char lenb[4];
    if (!in.read(reinterpret_cast<char*>(lenb), 4))
        throw std::runtime_error(path + ": too short for a header length");
    uint32_t hlen = uint32_t(lenb[0]) | uint32_t(lenb[1]) << 8 | uint32_t(lenb[2]) << 16 |
                    uint32_t(lenb[3]) << 24;
    std::string hs(hlen, '\0');
    if (!in.read(hs.data(), hlen)) throw std::runtime_error(path + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": malformed header: " + e.what());
    }

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint ckpt;
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<size_t>>();
        size_t offset = entry.at("offset").get<size_t>();
        size_t bytes = t.elem_count() * sizeof(double);
        if (offset + bytes > payload.size())
            throw std::runtime_error(path + ": tensor '" + t.name + "' needs bytes [" +
                                     std::to_string(offset) + ", " + std::to_string(offset + bytes) +
                                     ") but payload has " + std::to_string(payload.size()));
        t.data.resize(t.elem_count());
        std::memcpy(t.data.data(), payload.data() + offset, bytes);
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

} // namespace diver
