// Copyright 2026 The pianojudge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PIANOJUDGE_RNG_H_
#define PIANOJUDGE_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace pianojudge {

// 64-bit FNV-1a. Used to derive stable seeds from names and recording ids.
constexpr uint64_t Fnv1a64(std::string_view text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

// Independent random stream for one named consumer of the run seed
// ("split", "pairing", "init", "batching", ...).
inline std::mt19937_64 MakeStream(uint64_t seed, std::string_view name) {
  const uint64_t tag = Fnv1a64(name);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(tag), static_cast<uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace pianojudge

#endif  // PIANOJUDGE_RNG_H_
