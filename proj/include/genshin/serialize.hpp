#pragma once

#include "genshin/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace genshin {

/// Raised for unreadable or ill-formed files; the message names the file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kTensorMagic[4] = {'G', 'S', 'T', 'N'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

// Binary layout: "GSTN", version u32, rank u32, rank × u64 dims, then
// little-endian f64 values in row-major order.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& source = "<stream>");

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Writes a rank-2 tensor (or rank-3 with the leading axis flattened) as CSV.
void save_csv(const std::filesystem::path& path, const Tensor& t, int precision = 10);

}  // namespace genshin
