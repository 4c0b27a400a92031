#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stanp::ckpt {

enum class Dtype : std::uint8_t { f32 = 0, i32 = 1 };

// One named array. Exactly one of f32/i32 is populated, per dtype.
struct Entry {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<std::size_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;
};

// Versioned binary container. Byte layout (all integers little-endian):
//   magic "STNPCKPT" | u32 version | u32 kind
//   u32 header count | per header: u16 name length, name bytes, f64 value
//   u32 entry count  | per entry:  u16 name length, name bytes, u8 dtype,
//                      u8 rank, u64 dims..., payload (f32 or i32 LE)
struct Container {
    std::uint32_t kind = 0;  // 1 = anp, 2 = qrf, 3 = gbq
    std::vector<std::pair<std::string, double>> header;
    std::vector<Entry> entries;

    double header_value(const std::string& name) const;  // throws FormatError if absent
    const Entry& entry(const std::string& name) const;   // throws FormatError if absent
};

constexpr std::uint32_t kContainerVersion = 1;

void write_container(const Container& c, const std::string& path);
Container read_container(const std::string& path);

}  // namespace stanp::ckpt
