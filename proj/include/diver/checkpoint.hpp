#pragma once
#include <string>
#include <vector>

#include "json.hpp"

namespace diver {

// One named tensor inside a checkpoint file. Payload is row-major doubles;
// shape is free-form (vectors use a single dim, matrices two).
struct NamedTensor {
    std::string name;
    std::vector<size_t> shape;
    std::vector<double> data;

    size_t elem_count() const;
};

// Binary container shared by every model we persist: a little-endian u32
// header length, a JSON header {"meta": {...}, "tensors": [{name, shape,
// offset}, ...]} where offset is the byte position of the tensor inside the
// payload region, then the concatenated row-major little-endian f64 payloads.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<NamedTensor> tensors;

    const NamedTensor& get(const std::string& name) const;      // throws if absent
    const NamedTensor* find(const std::string& name) const;     // nullptr if absent
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace diver
