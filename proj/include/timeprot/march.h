/*
 * Copyright 2026 The timeprot Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Microarchitectural state that influences execution latency. Everything here
// is either flushable (core-local, reset on a domain switch) or partitionable
// (shared, divided among domains by page colour).

#ifndef TIMEPROT_MARCH_H_
#define TIMEPROT_MARCH_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "timeprot/types.h"

namespace timeprot {

struct CacheGeometry {
  std::uint32_t sets = 1;
  std::uint32_t ways = 1;
  std::uint32_t line_size = 64;
  std::uint32_t page_size = 4096;

  // Throws Error(kConfig) unless all fields are powers of two and
  // line_size <= page_size.
  void validate() const;

  std::uint64_t lines() const { return std::uint64_t{sets} * ways; }
  std::uint64_t capacity() const { return lines() * line_size; }

  friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

std::uint32_t set_index(PhysAddr addr, const CacheGeometry& geom);
std::uint32_t num_colours(const CacheGeometry& geom);
Colour colour_of_frame(Frame frame, const CacheGeometry& geom);

// Half-open range of set ordinals [first, first + count).
struct SetRange {
  std::uint32_t first = 0;
  std::uint32_t count = 0;

  bool contains(std::uint32_t set) const {
    return set >= first && set - first < count;
  }
  friend bool operator==(const SetRange&, const SetRange&) = default;
};

// Sets reachable from pages of `colour`. Throws Error(kConfig) if the colour
// is out of range.
SetRange llc_sets_of_colour(Colour colour, const CacheGeometry& geom);

enum class AccessKind { kRead, kWrite };

struct AccessResult {
  bool hit = false;
  bool evicted_dirty = false;
};

// Set-associative, physically indexed and tagged, write-back/write-allocate
// cache with strict LRU replacement. lru_rank 0 is most recently used.
class CacheState {
 public:
  struct Way {
    std::uint64_t tag = 0;
    bool valid = false;
    bool dirty = false;
    std::uint32_t lru_rank = 0;
    friend bool operator==(const Way&, const Way&) = default;
  };

  explicit CacheState(const CacheGeometry& geom);

  AccessResult access(PhysAddr addr, AccessKind kind);
  bool contains(PhysAddr addr) const;

  // Invalidates every line; returns how many were dirty.
  std::size_t invalidate_all();

  std::size_t valid_count() const;
  std::size_t dirty_count() const;
  std::span<const Way> set(std::uint32_t index) const;
  const CacheGeometry& geometry() const { return geom_; }

  friend bool operator==(const CacheState&, const CacheState&) = default;

 private:
  CacheGeometry geom_;
  std::vector<Way> ways_;  // sets * ways, set-major
};

// Pure form of CacheState::access.
std::pair<AccessResult, CacheState> cache_access(CacheState cache,
                                                 PhysAddr addr,
                                                 AccessKind kind);

// ASID-tagged TLB. Entries are indexed by virtual page number; geometry uses
// line_size == page_size.
class TlbState {
 public:
  struct Entry {
    DomainId asid = 0;
    std::uint64_t vpn = 0;
    bool valid = false;
    std::uint32_t lru_rank = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  explicit TlbState(const CacheGeometry& geom);

  // Returns true on hit; installs the translation on a miss.
  bool lookup(DomainId asid, std::uint64_t vpn);
  bool contains(DomainId asid, std::uint64_t vpn) const;

  void invalidate_asid(DomainId asid);
  void invalidate_all();

  // Valid (asid, vpn) pairs for one ASID, sorted.
  std::vector<std::uint64_t> valid_pages(DomainId asid) const;
  std::size_t valid_count() const;
  const CacheGeometry& geometry() const { return geom_; }

  friend bool operator==(const TlbState&, const TlbState&) = default;

 private:
  CacheGeometry geom_;
  std::vector<Entry> entries_;
};

// Direct-mapped branch target table indexed by the low program-counter bits.
class PredictorState {
 public:
  struct Entry {
    std::uint64_t tag = 0;
    bool valid = false;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  explicit PredictorState(std::size_t entries);

  // True if the entry for `pc` was already trained; trains it either way.
  bool predict(std::uint64_t pc);
  void invalidate_all();

  std::size_t size() const { return table_.size(); }
  std::size_t valid_count() const;

  friend bool operator==(const PredictorState&,
                         const PredictorState&) = default;

 private:
  std::vector<Entry> table_;
};

struct FlushableState {
  CacheState l1i;
  CacheState l1d;
  TlbState tlb;
  PredictorState predictor;
  friend bool operator==(const FlushableState&,
                         const FlushableState&) = default;
};

struct PartitionableState {
  CacheState llc;
  friend bool operator==(const PartitionableState&,
                         const PartitionableState&) = default;
};

struct MicroArchState {
  FlushableState flushable;
  PartitionableState partitionable;
  friend bool operator==(const MicroArchState&,
                         const MicroArchState&) = default;
};

enum class StateClass { kFlushable, kPartitionable };

struct ComponentInfo {
  std::string_view name;
  StateClass cls;
};

// Every latency-relevant component and its class. Each appears exactly once.
inline constexpr std::array<ComponentInfo, 5> kMicroArchComponents = {{
    {"l1i", StateClass::kFlushable},
    {"l1d", StateClass::kFlushable},
    {"tlb", StateClass::kFlushable},
    {"predictor", StateClass::kFlushable},
    {"llc", StateClass::kPartitionable},
}};

// Invalidates all flushable state in place and returns the number of dirty
// L1D lines written back. Partitionable state is not touched.
std::size_t flush_flushable_inplace(MicroArchState& m);

std::pair<std::size_t, MicroArchState> flush_flushable(MicroArchState m);

}  // namespace timeprot

#endif  // TIMEPROT_MARCH_H_
