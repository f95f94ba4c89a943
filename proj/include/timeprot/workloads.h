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

// Program generators for the attack and defence scenarios, and the decoders
// an attacker applies to what Lo observes.

#ifndef TIMEPROT_WORKLOADS_H_
#define TIMEPROT_WORKLOADS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "timeprot/kernel.h"
#include "timeprot/march.h"
#include "timeprot/program.h"
#include "timeprot/timemodel.h"

namespace timeprot {

struct Secret {
  std::uint64_t value = 0;
  unsigned width = 8;

  // Throws Error(kConfig) unless value < 2^width.
  void validate() const;
  bool bit(unsigned i) const { return (value >> i) & 1u; }
  std::uint64_t count() const { return std::uint64_t{1} << width; }
};

// All secrets of the given width, in increasing order.
std::vector<Secret> all_secrets(unsigned width);

// Layout of a prime-and-probe attack on one cache level. Both buffers start
// at a virtual page boundary; page w of a buffer supplies way w, so the
// first `ways` pages of each buffer must share a colour (the allocator hands
// out lowest colours first, which guarantees it).
struct PrimeProbeConfig {
  CacheGeometry target;            // attacked cache (L1D or LLC)
  std::uint32_t sets_per_bit = 1;  // width of one set group
  std::uint32_t base_set = 16;     // first probed set within a page's span
  Cycles wait_cycles = 0;          // spy idles this long between the phases
  Cycles wait_chunk = 50;          // granularity of the idle loop
  VirtAddr spy_buffer{0};
  VirtAddr trojan_buffer{0};

  // Sets a single page maps onto: the usable set range.
  std::uint32_t usable_sets() const;
};

struct AttackPrograms {
  Program trojan;  // Hi
  Program spy;     // Lo
};

// Spy: prime every (set, way) of the usable range, idle, then re-load each
// set of the probe range with an OBSERVE "probe <set>" after every load.
// Trojan: one load per set of group i iff bit i of the secret is set.
// Throws Error(kConfig) if width * sets_per_bit sets do not fit.
AttackPrograms gen_prime_probe(const Secret& secret, const PrimeProbeConfig& cfg);

// Measured latency per probed set (maximum over the set's ways).
using ProbeResult = std::map<std::uint32_t, Cycles>;

struct DecodeConfig {
  unsigned width = 8;
  std::uint32_t sets_per_bit = 1;
  std::uint32_t base_set = 16;
  // When true a fast access means 1 (reload style); otherwise a slow one does.
  bool fast_is_one = false;
};

// Bit i is 1 iff any probed set of group i is slower than `threshold`
// (faster, when fast_is_one).
Secret decode_probe(const ProbeResult& r, const DecodeConfig& cfg, Cycles threshold);

// Default decode threshold: midway between the two latencies, rounded down.
Cycles midpoint(Cycles fast, Cycles slow);

struct FlushLatencyConfig {
  CacheGeometry l1d;
  VirtAddr trojan_buffer{0};
};

// Trojan: `secret.value` stores to distinct L1D lines, then HALT. Observer:
// OBSERVE "switch" first, then HALT. Throws Error(kConfig) if the secret
// exceeds the number of L1D lines.
AttackPrograms gen_flush_latency_channel(const Secret& secret,
                                         const FlushLatencyConfig& cfg);

struct KernelTextConfig {
  Cycles wait_cycles = 0;  // spy idles this long before measuring
  Cycles wait_chunk = 50;
};

// Trojan: SYSCALL i for every set bit i, then HALT. Spy: after idling,
// OBSERVE "sys <i>" around SYSCALL i for every bit; a fast syscall means
// the shared kernel text was already cached.
AttackPrograms gen_kernel_text(const Secret& secret, const KernelTextConfig& cfg);

// Latency threshold separating a syscall whose handler text hit in the LLC
// from one that went to memory.
Cycles kernel_text_threshold(const TimeModelParams& p);

struct InterruptConfig {
  std::uint32_t io_syscall = 0;  // syscall bound to the trojan's device
  Cycles stride = 20;            // delay per secret unit before starting I/O
  Cycles observer_chunk = 20;    // spy's sampling period
  std::size_t observer_samples = 300;
};

// Trojan: COMPUTE(secret * stride); SYSCALL io_syscall; HALT.
// Spy: observer_samples x (COMPUTE observer_chunk; OBSERVE "tick <k>").
AttackPrograms gen_interrupt_channel(const Secret& secret, const InterruptConfig& cfg);

struct DowngraderConfig {
  unsigned width = 8;
  Cycles pad = 0;              // padding for the secret-dependent work
  Cycles switch_overhead = 0;  // bound on the domain switch's own work
};

struct DowngraderFragment {
  Program hi;        // COMPUTE(secret); HALT
  Program observer;  // OBSERVE "handoff"; HALT
  Cycles hi_slice = 1;
  Cycles hi_pad = 0;
};

// Worst-case downgrader work is 2^width - 1 cycles. Throws Error(kConfig)
// if cfg.pad is below it, which would guarantee a PadOverrun.
DowngraderFragment gen_downgrader(const Secret& secret, const DowngraderConfig& cfg);

}  // namespace timeprot

#endif  // TIMEPROT_WORKLOADS_H_
