#pragma once

// Strict JSON reading: every key must be consumed, unknown keys are
// reported with their full dotted path.

#include "m2t/common.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace m2t {

using Json = nlohmann::json;

class JsonObjectReader {
public:
    JsonObjectReader(const Json& j, std::string path);

    template <typename V>
    bool optional(const char* key, V& out)
    {
        const Json* v = take(key);
        if (!v)
            return false;
        try {
            out = v->get<V>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("invalid value for key '" + qualified(key) + "': " + e.what());
        }
        return true;
    }

    template <typename V>
    void required(const char* key, V& out)
    {
        if (!optional(key, out))
            throw ConfigError("missing required key '" + qualified(key) + "'");
    }

    /// Marks `key` consumed and returns its value, or null if absent.
    const Json* take(const char* key);

    /// Throws ConfigError naming the first key that was never consumed.
    void finish() const;

    std::string qualified(const char* key) const;

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Parses a JSON file, wrapping I/O and syntax failures in ConfigError.
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

} // namespace m2t
