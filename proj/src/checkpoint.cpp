#include "stanp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "stanp/errors.hpp"
#include "stanp/tensor.hpp"

namespace stanp::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'N', 'P', 'C', 'K', 'P', 'T'};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_name(std::string& out, const std::string& name) {
    if (name.size() > 0xFFFF) throw ContractViolation("checkpoint name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
}

class ByteReader {
public:
    ByteReader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::uint32_t byte() {
        need(1);
        return static_cast<unsigned char>(bytes_[pos_++]);
    }

    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated: " + path_);
    }

    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

double Container::header_value(const std::string& name) const {
    for (const auto& [k, v] : header) {
        if (k == name) return v;
    }
    throw FormatError("checkpoint header missing field " + name);
}

const Entry& Container::entry(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw FormatError("checkpoint missing entry " + name);
}

void write_container(const Container& c, const std::string& path) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kContainerVersion);
    put_u32(out, c.kind);
    put_u32(out, static_cast<std::uint32_t>(c.header.size()));
    for (const auto& [name, value] : c.header) {
        put_name(out, name);
        put_f64(out, value);
    }
    put_u32(out, static_cast<std::uint32_t>(c.entries.size()));
    for (const Entry& e : c.entries) {
        put_name(out, e.name);
        out.push_back(static_cast<char>(e.dtype));
        if (e.shape.size() > 0xFF) throw ContractViolation("checkpoint entry rank too large");
        out.push_back(static_cast<char>(e.shape.size()));
        std::size_t count = 1;
        for (std::size_t d : e.shape) {
            put_u64(out, d);
            count *= d;
        }
        if (e.dtype == Dtype::f32) {
            if (e.f32.size() != count) throw ContractViolation("entry " + e.name + " payload/shape mismatch");
            for (float v : e.f32) put_f32(out, v);
        } else {
            if (e.i32.size() != count) throw ContractViolation("entry " + e.name + " payload/shape mismatch");
            for (std::int32_t v : e.i32) put_u32(out, static_cast<std::uint32_t>(v));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("cannot open checkpoint for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ParseError("short write to checkpoint: " + path);
}

Container read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ByteReader r(std::move(bytes), path);

    if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw FormatError("bad checkpoint magic: " + path);
    }
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Container c;
    c.kind = r.u32();
    const std::uint32_t n_header = r.u32();
    c.header.reserve(n_header);
    for (std::uint32_t i = 0; i < n_header; ++i) {
        const std::uint16_t len = r.u16();
        std::string name = r.str(len);
        const double value = r.f64();
        c.header.emplace_back(std::move(name), value);
    }
    const std::uint32_t n_entries = r.u32();
    c.entries.reserve(n_entries);
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        Entry e;
        const std::uint16_t len = r.u16();
        e.name = r.str(len);
        const std::string tag = r.str(2);
        e.dtype = static_cast<Dtype>(static_cast<unsigned char>(tag[0]));
        if (e.dtype != Dtype::f32 && e.dtype != Dtype::i32) {
            throw FormatError("unknown dtype in checkpoint entry " + e.name);
        }
        const unsigned rank = static_cast<unsigned char>(tag[1]);
        std::size_t count = 1;
        for (unsigned d = 0; d < rank; ++d) {
            e.shape.push_back(static_cast<std::size_t>(r.u64()));
            count *= e.shape.back();
        }
        if (e.dtype == Dtype::f32) {
            e.f32.reserve(count);
            for (std::size_t j = 0; j < count; ++j) e.f32.push_back(r.f32());
        } else {
            e.i32.reserve(count);
            for (std::size_t j = 0; j < count; ++j) e.i32.push_back(static_cast<std::int32_t>(r.u32()));
        }
        c.entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload: " + path);
    return c;
}

}  // namespace stanp::ckpt
