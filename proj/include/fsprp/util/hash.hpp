#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fsprp::util {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a. Stable across platforms and runs, unlike std::hash.
class Fnv1a {
public:
    explicit Fnv1a(std::uint64_t basis = kFnvOffset) : h_(basis) {}

    Fnv1a& bytes(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= kFnvPrime;
        }
        return *this;
    }

    // Length-prefixed so that ("ab","c") and ("a","bc") hash differently.
    Fnv1a& field(std::string_view s) {
        u64(s.size());
        return bytes(s);
    }

    Fnv1a& u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h_ ^= static_cast<unsigned char>(v >> (8 * i));
            h_ *= kFnvPrime;
        }
        return *this;
    }

    std::uint64_t value() const noexcept { return h_; }

private:
    std::uint64_t h_;
};

inline std::uint64_t fnv1a64(std::string_view s) { return Fnv1a{}.bytes(s).value(); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace fsprp::util
