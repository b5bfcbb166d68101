#include "m2t/config.hpp"

#include <fstream>
#include <sstream>

namespace m2t {

JsonObjectReader::JsonObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path))
{
    if (!j_.is_object())
        throw ConfigError("expected an object at '" + (path_.empty() ? std::string("<root>") : path_) + "'");
}

const Json* JsonObjectReader::take(const char* key)
{
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
}

void JsonObjectReader::finish() const
{
    for (const auto& [k, v] : j_.items())
        if (!seen_.count(k))
            throw ConfigError("unknown key '" + qualified(k.c_str()) + "'");
}

std::string JsonObjectReader::qualified(const char* key) const
{
    return path_.empty() ? std::string(key) : path_ + "." + key;
}

Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return Json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& j)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw DataError("write failed for " + path);
}

} // namespace m2t
