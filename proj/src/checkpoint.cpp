#include "m2t/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace m2t {

namespace {

constexpr char kMagic[8] = {'M', '2', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename U>
void put(std::string& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin) : b_(bytes), origin_(origin) {}

    template <typename U>
    U get()
    {
        need(sizeof(U));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return static_cast<U>(v);
    }

    std::string bytes(std::size_t n)
    {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == b_.size(); }
    [[noreturn]] void fail(const std::string& what) const { throw DataError(origin_ + ": " + what); }

private:
    void need(std::size_t n) const
    {
        if (b_.size() - pos_ < n)
            fail("truncated checkpoint");
    }

    const std::string& b_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace

const NamedArray* Checkpoint::find(const std::string& name) const
{
    for (const auto& a : arrays)
        if (a.name == name)
            return &a;
    return nullptr;
}

void Checkpoint::add(const std::string& prefix, const ParameterSet<float>& params)
{
    for (const auto& [name, t] : params.items()) {
        const auto d = t.data();
        arrays.push_back({prefix + name, t.shape(), std::vector<float>(d.begin(), d.end())});
    }
}

void Checkpoint::load(const std::string& prefix, ParameterSet<float>& params) const
{
    for (auto& [name, t] : params.items()) {
        const NamedArray* a = find(prefix + name);
        if (!a)
            throw DataError("checkpoint lacks array '" + prefix + name + "'");
        if (a->shape != t.shape())
            throw DataError("checkpoint array '" + prefix + name + "' has shape " + shape_str(a->shape) +
                            ", expected " + shape_str(t.shape()));
        BasicTensor<float> dst = t;
        auto out = dst.mutable_data();
        std::copy(a->values.begin(), a->values.end(), out.begin());
    }
}

std::string serialize_checkpoint(const Checkpoint& c)
{
    std::string out(kMagic, sizeof(kMagic));
    const std::string meta = c.meta.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
        if (static_cast<Index>(a.values.size()) != numel(a.shape))
            throw ShapeError("checkpoint array '" + a.name + "' size does not match its shape");
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (Index e : a.shape)
            put<std::uint64_t>(out, static_cast<std::uint64_t>(e));
        for (float v : a.values)
            put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin)
{
    Reader r(bytes, origin);
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        r.fail("not an M2TCKPT1 checkpoint");
    r.bytes(sizeof(kMagic));
    Checkpoint c;
    const auto meta_len = r.get<std::uint32_t>();
    try {
        c.meta = Json::parse(r.bytes(meta_len));
    } catch (const nlohmann::json::parse_error&) {
        r.fail("corrupt metadata block");
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        a.name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8)
            r.fail("array '" + a.name + "' has implausible rank");
        for (std::uint32_t i = 0; i < rank; ++i)
            a.shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
        const Index n = numel(a.shape);
        if (n < 0 || static_cast<std::uint64_t>(n) > bytes.size() / 4)
            r.fail("array '" + a.name + "' exceeds the file size");
        a.values.resize(static_cast<std::size_t>(n));
        for (auto& v : a.values)
            v = std::bit_cast<float>(r.get<std::uint32_t>());
        c.arrays.push_back(std::move(a));
    }
    if (!r.done())
        r.fail("trailing bytes after the last array");
    return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& c)
{
    const std::string bytes = serialize_checkpoint(c);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write checkpoint " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw DataError("write failed for checkpoint " + path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw DataError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

namespace {

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

Checkpoint read_checkpoint(const std::string& path) { return parse_checkpoint(slurp(path), path); }

std::string file_digest(const std::string& path)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : slurp(path)) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

} // namespace m2t
