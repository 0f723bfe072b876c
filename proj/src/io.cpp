#include "gradmask/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gradmask {

static_assert(std::endian::native == std::endian::little,
              "GMT1 serialization assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'G', 'M', 'T', '1'};
}

void write_gmt(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    const std::uint8_t dt = static_cast<std::uint8_t>(t.dtype());
    const std::uint8_t rank = static_cast<std::uint8_t>(t.shape().rank());
    os.put(static_cast<char>(dt));
    os.put(static_cast<char>(rank));
    for (int i = 0; i < t.shape().rank(); ++i) {
        const std::uint32_t ext = t.shape()[i];
        os.write(reinterpret_cast<const char*>(&ext), 4);
    }
    if (t.dtype() == Dtype::F32)
        os.write(reinterpret_cast<const char*>(t.data<float>().data()),
                 static_cast<std::streamsize>(t.numel() * 4));
    else
        os.write(reinterpret_cast<const char*>(t.data<double>().data()),
                 static_cast<std::streamsize>(t.numel() * 8));
    if (!os) raise(ErrorCode::Io, "GMT1 write failed");
}

Tensor read_gmt(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        raise(ErrorCode::Format, "GMT1: bad magic bytes");
    const int dt = is.get();
    const int rank = is.get();
    if (dt < 0 || dt > 1) raise(ErrorCode::Format, "GMT1: unknown dtype byte");
    if (rank < 0 || rank > Shape::kMaxRank) raise(ErrorCode::Format, "GMT1: rank out of range");
    std::vector<std::uint32_t> dims(static_cast<std::size_t>(rank));
    for (auto& ext : dims)
        if (!is.read(reinterpret_cast<char*>(&ext), 4)) raise(ErrorCode::Format, "GMT1: truncated header");
    Tensor t(Shape(std::span<const std::uint32_t>(dims)), static_cast<Dtype>(dt));
    const std::streamsize bytes =
        static_cast<std::streamsize>(t.numel() * dtype_size(t.dtype()));
    if (t.dtype() == Dtype::F32) {
        if (!is.read(reinterpret_cast<char*>(t.data<float>().data()), bytes))
            raise(ErrorCode::Format, "GMT1: truncated payload");
    } else {
        if (!is.read(reinterpret_cast<char*>(t.data<double>().data()), bytes))
            raise(ErrorCode::Format, "GMT1: truncated payload");
    }
    return t;
}

void write_gmt_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) raise(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    write_gmt(os, t);
}

Tensor read_gmt_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) raise(ErrorCode::Io, "cannot open " + path.string());
    return read_gmt(is);
}

std::vector<std::uint8_t> gmt_bytes(const Tensor& t) {
    std::ostringstream os(std::ios::binary);
    write_gmt(os, t);
    const std::string s = os.str();
    return {s.begin(), s.end()};
}

} // namespace gradmask
