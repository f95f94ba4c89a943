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

#include "timeprot/march.h"

#include <algorithm>
#include <bit>
#include <string>

namespace timeprot {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kColourExhausted: return "ColourExhausted";
    case ErrorCode::kPadOverrun: return "PadOverrun";
    case ErrorCode::kUnknownIrq: return "UnknownIrq";
    case ErrorCode::kAddressFault: return "AddressFault";
  }
  return "Error";
}

namespace {

// Strict LRU over one set. `Slot` needs `valid` and `lru_rank`. Returns the
// index of the way to fill: the lowest invalid way, else the LRU way.
template <typename Slot>
std::size_t victim_way(std::span<Slot> set) {
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (!set[w].valid) return w;
  }
  std::size_t lru = 0;
  for (std::size_t w = 1; w < set.size(); ++w) {
    if (set[w].lru_rank > set[lru].lru_rank) lru = w;
  }
  return lru;
}

// Makes `way` the MRU entry. Valid ways younger than its old rank age by one.
// A newly filled way is treated as older than every valid way.
template <typename Slot>
void touch(std::span<Slot> set, std::size_t way, bool was_valid) {
  const std::uint32_t old_rank =
      was_valid ? set[way].lru_rank : static_cast<std::uint32_t>(set.size());
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (w != way && set[w].valid && set[w].lru_rank < old_rank) {
      ++set[w].lru_rank;
    }
  }
  set[way].lru_rank = 0;
}

}  // namespace

void CacheGeometry::validate() const {
  auto pow2 = [](std::uint32_t v) { return std::has_single_bit(v); };
  if (!pow2(sets) || !pow2(ways) || !pow2(line_size) || !pow2(page_size)) {
    throw Error(ErrorCode::kConfig,
                "cache geometry fields must be powers of two");
  }
  if (line_size > page_size) {
    throw Error(ErrorCode::kConfig, "line_size must not exceed page_size");
  }
}

std::uint32_t set_index(PhysAddr addr, const CacheGeometry& geom) {
  return static_cast<std::uint32_t>((addr.value / geom.line_size) % geom.sets);
}

std::uint32_t num_colours(const CacheGeometry& geom) {
  const std::uint64_t span = std::uint64_t{geom.sets} * geom.line_size;
  return static_cast<std::uint32_t>(std::max<std::uint64_t>(1, span / geom.page_size));
}

Colour colour_of_frame(Frame frame, const CacheGeometry& geom) {
  return static_cast<Colour>(frame.value % num_colours(geom));
}

SetRange llc_sets_of_colour(Colour colour, const CacheGeometry& geom) {
  const std::uint32_t colours = num_colours(geom);
  if (colour >= colours) {
    throw Error(ErrorCode::kConfig, "colour " + std::to_string(colour) +
                                        " out of range (" +
                                        std::to_string(colours) + " colours)");
  }
  const std::uint32_t per_colour = geom.sets / colours;
  return SetRange{colour * per_colour, per_colour};
}

CacheState::CacheState(const CacheGeometry& geom)
    : geom_(geom), ways_(geom.lines()) {
  geom_.validate();
}

AccessResult CacheState::access(PhysAddr addr, AccessKind kind) {
  const std::uint64_t tag = addr.value / geom_.line_size;
  std::span<Way> set(ways_.data() + std::size_t{set_index(addr, geom_)} * geom_.ways,
                     geom_.ways);
  AccessResult result;
  std::size_t way = set.size();
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (set[w].valid && set[w].tag == tag) {
      way = w;
      break;
    }
  }
  if (way != set.size()) {
    result.hit = true;
    touch(set, way, true);
  } else {
    way = victim_way(set);
    const bool was_valid = set[way].valid;
    result.evicted_dirty = was_valid && set[way].dirty;
    touch(set, way, was_valid);
    set[way].tag = tag;
    set[way].valid = true;
    set[way].dirty = false;
  }
  if (kind == AccessKind::kWrite) set[way].dirty = true;
  return result;
}

bool CacheState::contains(PhysAddr addr) const {
  const std::uint64_t tag = addr.value / geom_.line_size;
  for (const Way& w : set(set_index(addr, geom_))) {
    if (w.valid && w.tag == tag) return true;
  }
  return false;
}

std::size_t CacheState::invalidate_all() {
  const std::size_t dirty = dirty_count();
  std::fill(ways_.begin(), ways_.end(), Way{});
  return dirty;
}

std::size_t CacheState::valid_count() const {
  return std::count_if(ways_.begin(), ways_.end(),
                       [](const Way& w) { return w.valid; });
}

std::size_t CacheState::dirty_count() const {
  return std::count_if(ways_.begin(), ways_.end(),
                       [](const Way& w) { return w.dirty; });
}

std::span<const CacheState::Way> CacheState::set(std::uint32_t index) const {
  return {ways_.data() + std::size_t{index} * geom_.ways, geom_.ways};
}

std::pair<AccessResult, CacheState> cache_access(CacheState cache,
                                                 PhysAddr addr,
                                                 AccessKind kind) {
  const AccessResult r = cache.access(addr, kind);
  return {r, std::move(cache)};
}

TlbState::TlbState(const CacheGeometry& geom)
    : geom_(geom), entries_(geom.lines()) {
  geom_.validate();
  if (geom_.line_size != geom_.page_size) {
    throw Error(ErrorCode::kConfig, "TLB geometry needs line_size == page_size");
  }
}

bool TlbState::lookup(DomainId asid, std::uint64_t vpn) {
  std::span<Entry> set(entries_.data() + (vpn % geom_.sets) * geom_.ways,
                       geom_.ways);
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (set[w].valid && set[w].asid == asid && set[w].vpn == vpn) {
      touch(set, w, true);
      return true;
    }
  }
  const std::size_t w = victim_way(set);
  touch(set, w, set[w].valid);
  set[w].asid = asid;
  set[w].vpn = vpn;
  set[w].valid = true;
  return false;
}

bool TlbState::contains(DomainId asid, std::uint64_t vpn) const {
  const std::size_t base = (vpn % geom_.sets) * geom_.ways;
  for (std::size_t w = 0; w < geom_.ways; ++w) {
    const Entry& e = entries_[base + w];
    if (e.valid && e.asid == asid && e.vpn == vpn) return true;
  }
  return false;
}

void TlbState::invalidate_asid(DomainId asid) {
  for (std::size_t s = 0; s < geom_.sets; ++s) {
    std::span<Entry> set(entries_.data() + s * geom_.ways, geom_.ways);
    for (Entry& e : set) {
      if (!e.valid || e.asid != asid) continue;
      // Survivors older than the removed entry move up one rank.
      for (Entry& other : set) {
        if (other.valid && other.lru_rank > e.lru_rank) --other.lru_rank;
      }
      e = Entry{};
    }
  }
}

void TlbState::invalidate_all() {
  std::fill(entries_.begin(), entries_.end(), Entry{});
}

std::vector<std::uint64_t> TlbState::valid_pages(DomainId asid) const {
  std::vector<std::uint64_t> out;
  for (const Entry& e : entries_) {
    if (e.valid && e.asid == asid) out.push_back(e.vpn);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t TlbState::valid_count() const {
  return std::count_if(entries_.begin(), entries_.end(),
                       [](const Entry& e) { return e.valid; });
}

PredictorState::PredictorState(std::size_t entries) : table_(entries) {
  if (!std::has_single_bit(entries)) {
    throw Error(ErrorCode::kConfig, "predictor size must be a power of two");
  }
}

bool PredictorState::predict(std::uint64_t pc) {
  const std::size_t bits = std::countr_zero(table_.size());
  Entry& e = table_[pc & (table_.size() - 1)];
  const std::uint64_t tag = pc >> bits;
  const bool hit = e.valid && e.tag == tag;
  e = Entry{tag, true};
  return hit;
}

void PredictorState::invalidate_all() {
  std::fill(table_.begin(), table_.end(), Entry{});
}

std::size_t PredictorState::valid_count() const {
  return std::count_if(table_.begin(), table_.end(),
                       [](const Entry& e) { return e.valid; });
}

std::size_t flush_flushable_inplace(MicroArchState& m) {
  FlushableState& f = m.flushable;
  f.l1i.invalidate_all();
  const std::size_t dirty = f.l1d.invalidate_all();
  f.tlb.invalidate_all();
  f.predictor.invalidate_all();
  return dirty;
}

std::pair<std::size_t, MicroArchState> flush_flushable(MicroArchState m) {
  const std::size_t dirty = flush_flushable_inplace(m);
  return {dirty, std::move(m)};
}

}  // namespace timeprot
