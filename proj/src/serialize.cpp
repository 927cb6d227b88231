#include "genshin/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace genshin {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& source, const char* field) {
    unsigned char bytes[sizeof(T)];
    const auto offset = static_cast<long long>(in.tellg());
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw FormatError(source + ": truncated while reading " + field + " at offset " + std::to_string(offset));
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kTensorMagic, 4);
    put<std::uint32_t>(out, kTensorFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
}

Tensor read_tensor(std::istream& in, const std::string& source) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
        throw FormatError(source + ": bad magic at offset 0 (expected GSTN)");
    }
    const auto version = get<std::uint32_t>(in, source, "version");
    if (version != kTensorFormatVersion) {
        throw FormatError(source + ": unsupported tensor format version " + std::to_string(version));
    }
    const auto rank = get<std::uint32_t>(in, source, "rank");
    if (rank == 0 || rank > 16) throw FormatError(source + ": implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
        d = static_cast<std::size_t>(get<std::uint64_t>(in, source, "dimension"));
        if (d == 0) throw FormatError(source + ": zero-sized dimension");
    }
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = get<double>(in, source, "values");
    try {
        return Tensor(std::move(shape), std::move(values));
    } catch (const NumericError&) {
        throw FormatError(source + ": non-finite value in tensor payload");
    }
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    write_tensor(out, t);
    if (!out) throw FormatError(path.string() + ": write failed");
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open for reading");
    Tensor t = read_tensor(in, path.string());
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(path.string() + ": trailing bytes after tensor payload at offset " +
                          std::to_string(static_cast<long long>(in.tellg())));
    }
    return t;
}

void save_csv(const std::filesystem::path& path, const Tensor& t, int precision) {
    if (t.rank() < 1) throw ShapeError("save_csv: rank-0 tensor");
    const std::size_t cols = t.shape().back();
    const std::size_t rows = t.numel() / cols;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out << std::setprecision(precision);
    const auto v = t.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << v[r * cols + c];
        out << '\n';
    }
}

}  // namespace genshin
