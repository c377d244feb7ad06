#pragma once
#include <string>
#include <vector>

#include "json.hpp"

namespace diver {

// FNV-1a 64-bit digest, reported as 16 hex chars.
uint64_t fnv1a(const void* data, size_t len);
std::string digest_bytes(const std::string& bytes);
std::string digest_file(const std::string& path);

// Every command writes one of these next to its artifacts: the exact command
// line, the effective config, digests of inputs consumed and outputs produced,
// and the wall time. Re-running `command` must reproduce the outputs bitwise.
struct Manifest {
    std::string command;
    nlohmann::json config;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
    std::vector<std::pair<std::string, std::string>> outputs; // path, digest
    double wall_seconds = 0.0;
};

void add_input(Manifest& m, const std::string& path);
void add_output(Manifest& m, const std::string& path);

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

} // namespace diver
