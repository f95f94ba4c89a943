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

#ifndef TIMEPROT_TIMEMODEL_H_
#define TIMEPROT_TIMEMODEL_H_

#include <cstddef>

#include "timeprot/types.h"

namespace timeprot {

// Latency parameters. The scale is arbitrary; only the function from
// microarchitectural outcome to elapsed time matters.
struct TimeModelParams {
  Cycles l1_hit = 1;
  Cycles llc_hit = 12;
  Cycles mem = 100;
  Cycles predict_ok = 1;
  Cycles mispredict = 15;
  Cycles tlb_miss_penalty = 30;
  Cycles flush_base = 20;
  Cycles writeback_per_line = 10;
  Cycles kernel_entry = 50;
  Cycles kernel_exit = 50;

  // Throws Error(kConfig) unless l1_hit <= llc_hit <= mem.
  void validate() const;

  friend bool operator==(const TimeModelParams&,
                         const TimeModelParams&) = default;
};

enum class HitLevel { kL1, kLlc, kMemory };

struct AccessOutcome {
  HitLevel level = HitLevel::kMemory;
  bool tlb_hit = true;
};

// Latency of the level that hit (not a sum over levels), plus the TLB miss
// penalty when translation missed.
Cycles access_latency(const TimeModelParams& p, AccessOutcome outcome);

Cycles flush_latency(const TimeModelParams& p, std::size_t dirty_count);

class Clock {
 public:
  Clock() = default;
  explicit Clock(Cycles now) : now_(now) {}

  Cycles now() const { return now_; }

  friend bool operator==(const Clock&, const Clock&) = default;

 private:
  Cycles now_ = 0;
};

inline Clock advance(Clock c, Cycles d) { return Clock(c.now() + d); }

}  // namespace timeprot

#endif  // TIMEPROT_TIMEMODEL_H_
