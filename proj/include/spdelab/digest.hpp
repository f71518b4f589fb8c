#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace spdelab {

/// 64-bit FNV-1a, used for stable content digests in reports.
class Fnv1a {
public:
    Fnv1a& update(const void* data, std::size_t n) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
        return *this;
    }

    Fnv1a& update(std::string_view s) noexcept { return update(s.data(), s.size()); }

    Fnv1a& update(double v) noexcept {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        return update_u64(bits);
    }

    Fnv1a& update_u64(std::uint64_t v) noexcept {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        return update(b, 8);
    }

    template <typename Derived>
    Fnv1a& update(const Eigen::DenseBase<Derived>& m) noexcept {
        update_u64(static_cast<std::uint64_t>(m.rows()));
        update_u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) update(static_cast<double>(m(i, j)));
        return *this;
    }

    std::uint64_t value() const noexcept { return h_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace spdelab
