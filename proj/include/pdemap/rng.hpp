#pragma once

// Counter-based random streams.
//
// Every random quantity in the library is drawn from a Stream identified by
// (seed, stream id). The i-th output of a stream is a pure function
// mix64(key + i * golden) of its key and counter, so draws never depend on
// thread scheduling or on how many other streams were consumed. Stream ids are
// built by hashing a name and optional integer labels (e.g. "dataset", N, rep).

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

#include <boost/random/normal_distribution.hpp>

namespace pdemap {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream id from a name plus integer labels.
std::uint64_t stream_id(std::string_view name, std::initializer_list<std::uint64_t> labels = {}) noexcept;

class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, std::uint64_t stream) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        counter_ += 1;
        return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
    double normal() noexcept { return normal_(*this); }
    /// +1 or -1 with equal probability.
    double sign() noexcept { return ((*this)() >> 63) ? 1.0 : -1.0; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace pdemap
