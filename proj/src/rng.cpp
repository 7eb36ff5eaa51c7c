#include "pdemap/rng.hpp"

namespace pdemap {

std::uint64_t stream_id(std::string_view name, std::initializer_list<std::uint64_t> labels) noexcept {
    // FNV-1a over the name, then fold each label through the mixer.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    for (const auto label : labels) h = mix64(h ^ mix64(label + 0x632be59bd9b4e019ULL));
    return h;
}

Stream::Stream(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

}  // namespace pdemap
