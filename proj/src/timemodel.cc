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

#include "timeprot/timemodel.h"

namespace timeprot {

void TimeModelParams::validate() const {
  if (!(l1_hit <= llc_hit && llc_hit <= mem)) {
    throw Error(ErrorCode::kConfig,
                "latencies must satisfy l1_hit <= llc_hit <= mem");
  }
}

Cycles access_latency(const TimeModelParams& p, AccessOutcome outcome) {
  Cycles base = p.mem;
  switch (outcome.level) {
    case HitLevel::kL1: base = p.l1_hit; break;
    case HitLevel::kLlc: base = p.llc_hit; break;
    case HitLevel::kMemory: base = p.mem; break;
  }
  return outcome.tlb_hit ? base : base + p.tlb_miss_penalty;
}

Cycles flush_latency(const TimeModelParams& p, std::size_t dirty_count) {
  return p.flush_base + Cycles{dirty_count} * p.writeback_per_line;
}

}  // namespace timeprot
