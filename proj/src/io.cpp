#include "dnf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dnf/errors.hpp"

namespace dnf {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container codec assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'N', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw IoError("container: truncated header");
    return v;
}

}  // namespace

void write_container(std::ostream& os, const Shape& dims, const std::vector<float>& values) {
    if (values.size() != shape_numel(dims))
        throw std::invalid_argument("container: payload size does not match dims");
    if (dims.size() > 255)
        throw std::invalid_argument("container: too many dimensions");
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(kDtypeF32));
    os.put(static_cast<char>(dims.size()));
    for (std::size_t d : dims) {
        if (d > 0xffffffffULL) throw std::invalid_argument("container: dim too large");
        put_u32(os, static_cast<std::uint32_t>(d));
    }
    if (!values.empty())
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!os) throw IoError("container: write failed");
}

F32Payload read_container(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("container: bad magic");
    const int version = is.get();
    if (version != kVersion) throw IoError("container: unsupported version");
    const int dtype = is.get();
    if (dtype != kDtypeF32) throw IoError("container: unsupported dtype");
    const int ndim = is.get();
    if (ndim < 0) throw IoError("container: truncated header");

    F32Payload p;
    p.dims.resize(static_cast<std::size_t>(ndim));
    for (auto& d : p.dims) d = get_u32(is);
    p.values.resize(shape_numel(p.dims));
    if (!p.values.empty()) {
        is.read(reinterpret_cast<char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(float)));
        if (!is) throw IoError("container: truncated payload");
    }
    return p;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    std::vector<float> f(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) f[i] = static_cast<float>(t[i]);
    write_container(os, t.shape(), f);
}

Tensor read_tensor(std::istream& is) {
    F32Payload p = read_container(is);
    std::vector<double> d(p.values.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = p.values[i];
    return Tensor(std::move(p.dims), std::move(d));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ostringstream buf(std::ios::binary);
    write_tensor(buf, t);
    const std::string s = buf.str();
    write_file_atomic(path, s.data(), s.size());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_tensor(is);
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_image(const ImageU8& img) {
    // Dims participate so transposed content cannot collide.
    std::uint32_t hdr[3] = {static_cast<std::uint32_t>(img.height),
                            static_cast<std::uint32_t>(img.width),
                            static_cast<std::uint32_t>(img.channels)};
    std::uint64_t h = fnv1a(hdr, sizeof(hdr));
    return fnv1a(img.pixels.data(), img.pixels.size(), h);
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw IoError("cannot open " + path.string());
    const auto len = is.tellg();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
    is.seekg(0);
    if (!bytes.empty())
        is.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!is) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t len) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot create " + tmp.string());
        if (len > 0) os.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

}  // namespace dnf
