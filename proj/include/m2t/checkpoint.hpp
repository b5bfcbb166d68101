#pragma once

// "M2TCKPT1" container: named float32 arrays plus a JSON metadata block.
//
//   8 bytes   magic "M2TCKPT1"
//   u32       metadata length, then that many bytes of UTF-8 JSON
//   u32       array count
//   per array u32 name length, name bytes, u32 rank, rank x u64 extents,
//             little-endian float32 values
//
// All integers are little-endian.

#include "m2t/config.hpp"
#include "m2t/params.hpp"

#include <string>
#include <vector>

namespace m2t {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    Json meta = Json::object();
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;

    /// Appends every parameter as "<prefix><name>".
    void add(const std::string& prefix, const ParameterSet<float>& params);

    /// Copies "<prefix><name>" into each parameter. Throws DataError on a
    /// missing array or shape mismatch.
    void load(const std::string& prefix, ParameterSet<float>& params) const;
};

/// Serialized bytes; identical inputs give identical bytes.
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

/// Writes via a temporary file and rename.
void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

/// FNV-1a 64 of the file bytes, as 16 hex digits (provenance records).
std::string file_digest(const std::string& path);

} // namespace m2t
