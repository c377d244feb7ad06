#include "diver/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace diver {

uint64_t fnv1a(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string digest_bytes(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)fnv1a(bytes.data(), bytes.size()));
    return buf;
}

std::string digest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path + " for digest");
    std::stringstream ss;
    ss << in.rdbuf();
    return digest_bytes(ss.str());
}

void add_input(Manifest& m, const std::string& path) {
    m.inputs.emplace_back(path, digest_file(path));
}

void add_output(Manifest& m, const std::string& path) {
    m.outputs.emplace_back(path, digest_file(path));
}

void save_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config"] = m.config;
    j["inputs"] = nlohmann::json::object();
    for (const auto& [p, d] : m.inputs) j["inputs"][p] = d;
    j["outputs"] = nlohmann::json::object();
    for (const auto& [p, d] : m.outputs) j["outputs"][p] = d;
    j["wall_seconds"] = m.wall_seconds;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open manifest " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": malformed manifest: " + e.what());
    }
    Manifest m;
    m.command = j.value("command", "");
    m.config = j.value("config", nlohmann::json::object());
    if (j.contains("inputs"))
        for (auto it = j["inputs"].begin(); it != j["inputs"].end(); ++it)
            m.inputs.emplace_back(it.key(), it->get<std::string>());
    if (j.contains("outputs"))
        for (auto it = j["outputs"].begin(); it != j["outputs"].end(); ++it)
            m.outputs.emplace_back(it.key(), it->get<std::string>());
    m.wall_seconds = j.value("wall_seconds", 0.0);
    return m;
}

} // namespace diver
