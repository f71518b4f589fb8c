#pragma once

// K-channel Brownian paths on a uniform time grid. Increments are regenerated
// from (seed, stream_id, step, channel) by the counter-based generator, never
// stored on disk.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include <Eigen/Dense>

#include "spdelab/error.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

class BrownianPath {
public:
    BrownianPath(TimeGrid grid, std::size_t K, std::uint64_t seed, std::uint64_t stream_id, RowMatrix increments)
        : grid_(grid), K_(K), seed_(seed), stream_id_(stream_id), active_channels_(K),
          increments_(std::move(increments)) {}

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t channels() const noexcept { return K_; }
    std::size_t active_channels() const noexcept { return active_channels_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// N x K array of increments Delta W_m^k.
    const RowMatrix& increments() const noexcept { return increments_; }

    /// Increment over [t_m, t_{m+1}) as a K-vector.
    Vector increment(std::size_t m) const { return increments_.row(static_cast<Eigen::Index>(m)).transpose(); }

    /// W(t_m) for every channel, W(0) = 0.
    Vector value_at(std::size_t m) const {
        Vector w = Vector::Zero(static_cast<Eigen::Index>(K_));
        for (std::size_t j = 0; j < m; ++j) w += increment(j);
        return w;
    }

    bool bitwise_equal(const BrownianPath& o) const {
        return grid_.same_as(o.grid_) && K_ == o.K_ && seed_ == o.seed_ && stream_id_ == o.stream_id_ &&
               active_channels_ == o.active_channels_ && increments_.rows() == o.increments_.rows() &&
               std::memcmp(increments_.data(), o.increments_.data(),
                           sizeof(double) * static_cast<std::size_t>(increments_.size())) == 0;
    }

private:
    friend BrownianPath project(const BrownianPath& path, std::size_t n);

    TimeGrid grid_;
    std::size_t K_;
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::size_t active_channels_;
    RowMatrix increments_;
};

/// Increments i.i.d. N(0, dt), keyed by (seed, stream_id, step, channel).
inline BrownianPath sample_path(const TimeGrid& grid, std::size_t K, std::uint64_t seed, std::uint64_t stream_id) {
    if (K == 0) throw ValidationError("Brownian path needs at least one channel (K >= 1)");
    const auto N = static_cast<Eigen::Index>(grid.steps());
    const double sd = std::sqrt(grid.dt());
    RowMatrix inc(N, static_cast<Eigen::Index>(K));
    for (Eigen::Index m = 0; m < N; ++m) {
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(K); ++k) {
            inc(m, k) = sd * gaussian(seed, StreamDomain::brownian, stream_id, static_cast<std::uint32_t>(m),
                                      static_cast<std::uint32_t>(k));
        }
    }
    return BrownianPath(grid, K, seed, stream_id, std::move(inc));
}

/// Coordinate projection P_n: channels with (1-based) index > n are zeroed.
inline BrownianPath project(const BrownianPath& path, std::size_t n) {
    if (n == 0 || n > path.channels()) {
        throw ValidationError("projection rank must satisfy 1 <= n <= K = " + std::to_string(path.channels()));
    }
    BrownianPath out = path;
    const auto K = static_cast<Eigen::Index>(path.channels());
    for (Eigen::Index k = static_cast<Eigen::Index>(n); k < K; ++k) out.increments_.col(k).setZero();
    out.active_channels_ = std::min(n, path.active_channels_);
    return out;
}

/// Discrete W_H(f) = sum_m f(t_m) . Delta W_m for a step function f given as
/// an N x K array of cell values.
inline double pair_with_step(const BrownianPath& path, const RowMatrix& f) {
    if (f.rows() != path.increments().rows() || f.cols() != path.increments().cols()) {
        throw ValidationError("step function must be N x K");
    }
    return (f.array() * path.increments().array()).sum();
}

/// Same realization on a grid `factor` times coarser: increments are summed,
/// so solutions at dt and 2 dt are driven by one Brownian path.
inline BrownianPath coarsen(const BrownianPath& path, std::size_t factor) {
    const std::size_t N = path.grid().steps();
    if (factor == 0 || N % factor != 0) throw ValidationError("coarsening factor must divide the step count");
    const auto Nc = static_cast<Eigen::Index>(N / factor);
    RowMatrix inc = RowMatrix::Zero(Nc, static_cast<Eigen::Index>(path.channels()));
    for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(N); ++m) inc.row(m / static_cast<Eigen::Index>(factor)) += path.increments().row(m);
    return BrownianPath(TimeGrid(path.grid().T(), N / factor), path.channels(), path.seed(), path.stream_id(), std::move(inc));
}

/// The first `steps` increments as a path on [0, steps dt].
inline BrownianPath prefix(const BrownianPath& path, std::size_t steps) {
    if (steps == 0 || steps > path.grid().steps()) throw ValidationError("prefix length must lie in [1, N]");
    return BrownianPath(TimeGrid::from_step(path.grid().dt(), steps), path.channels(), path.seed(), path.stream_id(),
                        path.increments().topRows(static_cast<Eigen::Index>(steps)));
}

// Flat 40-byte little-endian record: seed, stream_id, N, K (uint64) and dt (binary64).
struct PathRecord {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t steps = 0;
    std::uint64_t channels = 0;
    double dt = 0.0;

    static constexpr std::size_t kBytes = 40;

    static PathRecord of(const BrownianPath& p) {
        return PathRecord{p.seed(), p.stream_id(), p.grid().steps(), p.channels(), p.grid().dt()};
    }

    std::array<unsigned char, kBytes> encode() const {
        std::array<unsigned char, kBytes> out{};
        std::uint64_t bits = 0;
        std::memcpy(&bits, &dt, sizeof bits);
        const std::uint64_t words[5] = {seed, stream_id, steps, channels, bits};
        for (int w = 0; w < 5; ++w)
            for (int b = 0; b < 8; ++b) out[static_cast<std::size_t>(8 * w + b)] = static_cast<unsigned char>(words[w] >> (8 * b));
        return out;
    }

    static PathRecord decode(const std::array<unsigned char, kBytes>& in) {
        std::uint64_t words[5] = {};
        for (int w = 0; w < 5; ++w)
            for (int b = 0; b < 8; ++b) words[w] |= static_cast<std::uint64_t>(in[static_cast<std::size_t>(8 * w + b)]) << (8 * b);
        PathRecord r{words[0], words[1], words[2], words[3], 0.0};
        std::memcpy(&r.dt, &words[4], sizeof r.dt);
        return r;
    }

    BrownianPath regenerate() const {
        if (steps == 0 || channels == 0) throw ValidationError("path record has zero steps or channels");
        return sample_path(TimeGrid::from_step(dt, static_cast<std::size_t>(steps)), static_cast<std::size_t>(channels),
                           seed, stream_id);
    }
};

inline void write_path_record(std::ostream& os, const BrownianPath& p) {
    const auto bytes = PathRecord::of(p).encode();
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ValidationError("failed to write path record");
}

inline BrownianPath read_path_record(std::istream& is) {
    std::array<unsigned char, PathRecord::kBytes> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(bytes.size())) throw ValidationError("truncated path record");
    return PathRecord::decode(bytes).regenerate();
}

}  // namespace spdelab
