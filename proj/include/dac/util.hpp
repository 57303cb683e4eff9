#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dac {

/// splitmix64 finalizer; used to derive independent child seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Child seed for a named stream with integer coordinates, e.g. derive_seed(master, "noise", dev, snr, frame).
template <typename... Ints>
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, Ints... coords) {
    std::uint64_t h = mix64(master ^ fnv1a64(tag));
    ((h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(coords)))), ...);
    return h;
}

// Little-endian byte writer/reader for the binary formats. The host is assumed little-endian
// (checked in the .cpp with a static_assert on std::endian).
class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void put_f32(std::span<const float> v) {
        put_bytes({reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(float)});
    }
    std::vector<std::uint8_t>& bytes() { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

    bool has(std::size_t n) const { return buf_.size() - pos_ >= n; }
    std::size_t remaining() const { return buf_.size() - pos_; }
    std::size_t position() const { return pos_; }

    // Callers check has() first; get() on a short buffer is a logic error.
    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void get_bytes(std::span<std::uint8_t> out) {
        std::memcpy(out.data(), buf_.data() + pos_, out.size());
        pos_ += out.size();
    }
    std::vector<float> get_f32(std::size_t count) {
        std::vector<float> v(count);
        std::memcpy(v.data(), buf_.data() + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
        return v;
    }

private:
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace dac
