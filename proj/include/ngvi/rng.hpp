#pragma once

#include <cstdint>
#include <random>

namespace ngvi {

// All randomness flows through explicitly seeded generators; nothing reads
// global state, so equal seeds give identical streams within one build.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace ngvi
