#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emt {

// Deterministic RNG used everywhere randomness is needed (weight init,
// shuffling, synthetic data, the random reference classifier). mt19937_64 is
// bit-exact across implementations; the derived draws below avoid
// std::*_distribution, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 bits of randomness.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    uint64_t uniform_int(uint64_t n) { return engine_() % n; }

    // Standard normal via Box-Muller on the uniform draws above.
    double gauss() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    bool coin() { return (engine_() & 1u) != 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a 64-bit hash; used for config hashes / run ids.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320), as used by zip/png.
class Crc32 {
public:
    Crc32() : state_(0xFFFFFFFFu) {}

    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        uint32_t c = state_;
        for (size_t i = 0; i < len; ++i) c = table()[(c ^ p[i]) & 0xFF] ^ (c >> 8);
        state_ = c;
    }

    uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

    static uint32_t of(const void* data, size_t len) {
        Crc32 c;
        c.update(data, len);
        return c.value();
    }

private:
    static const std::array<uint32_t, 256>& table() {
        static const std::array<uint32_t, 256> t = [] {
            std::array<uint32_t, 256> out{};
            for (uint32_t i = 0; i < 256; ++i) {
                uint32_t c = i;
                for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
                out[i] = c;
            }
            return out;
        }();
        return t;
    }

    uint32_t state_;
};

// Little-endian scalar packing for the binary file formats.
namespace le {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

// Cursor-style reads over an in-memory buffer; bounds are the caller's problem
// to pre-check via remaining().
class Reader {
public:
    Reader(const std::string& buf) : buf_(buf), pos_(0) {}

    size_t remaining() const { return buf_.size() - pos_; }
    size_t pos() const { return pos_; }

    bool read_bytes(void* out, size_t n) {
        if (remaining() < n) return false;
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
        return true;
    }

    bool read_u32(uint32_t& v) {
        unsigned char b[4];
        if (!read_bytes(b, 4)) return false;
        v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return true;
    }

    bool read_u64(uint64_t& v) {
        unsigned char b[8];
        if (!read_bytes(b, 8)) return false;
        v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return true;
    }

    bool read_f64(double& v) {
        uint64_t bits;
        if (!read_u64(bits)) return false;
        std::memcpy(&v, &bits, 8);
        return true;
    }

    bool read_f32(float& v) {
        uint32_t bits;
        if (!read_u32(bits)) return false;
        std::memcpy(&v, &bits, 4);
        return true;
    }

    bool read_string(std::string& out, size_t n) {
        if (remaining() < n) return false;
        out.assign(buf_.data() + pos_, n);
        pos_ += n;
        return true;
    }

private:
    const std::string& buf_;
    size_t pos_;
};

}  // namespace le

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Input-file problem (bad syntax, bad value, bad magic). Derives from
// invalid_argument so the CLI maps it to the validation exit code.
class ParseError : public std::invalid_argument {
public:
    ParseError(const std::string& path, size_t line, const std::string& msg)
        : std::invalid_argument(path + ":" + std::to_string(line) + ": " + msg) {}
    ParseError(const std::string& path, const std::string& msg)
        : std::invalid_argument(path + ": " + msg) {}
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw std::runtime_error(path + ": read failed");
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.good()) throw std::runtime_error(path + ": write failed");
}

// Fixed-precision float formatting for the text file formats; keeps
// regenerated files byte-identical across platforms.
inline std::string fmt_f6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string fmt_f2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Splits on a single character, keeping empty fields.
inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string strip(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace emt
