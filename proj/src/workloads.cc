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

#include "timeprot/workloads.h"

#include <algorithm>
#include <string>

namespace timeprot {
namespace {

void append_wait(Program& p, Cycles total, Cycles chunk) {
  if (total == 0) return;
  chunk = std::max<Cycles>(chunk, 1);
  for (Cycles done = 0; done < total; done += chunk) {
    p.push_back(Instruction::compute(std::min(chunk, total - done)));
  }
}

}  // namespace

void Secret::validate() const {
  if (width >= 64 || value >= count()) {
    throw Error(ErrorCode::kConfig, "secret " + std::to_string(value) +
                                        " does not fit in " + std::to_string(width) +
                                        " bits");
  }
}

std::vector<Secret> all_secrets(unsigned width) {
  std::vector<Secret> out;
  const std::uint64_t n = std::uint64_t{1} << width;
  out.reserve(n);
  for (std::uint64_t v = 0; v < n; ++v) out.push_back(Secret{v, width});
  return out;
}

std::uint32_t PrimeProbeConfig::usable_sets() const {
  return std::min(target.sets, target.page_size / target.line_size);
}

AttackPrograms gen_prime_probe(const Secret& secret, const PrimeProbeConfig& cfg) {
  secret.validate();
  const std::uint32_t usable = cfg.usable_sets();
  const std::uint64_t probed = std::uint64_t{secret.width} * cfg.sets_per_bit;
  if (cfg.sets_per_bit == 0 || cfg.base_set + probed > usable) {
    throw Error(ErrorCode::kConfig,
                std::to_string(secret.width) + "-bit secret with " +
                    std::to_string(cfg.sets_per_bit) + " set(s) per bit does not fit " +
                    std::to_string(usable) + " usable sets from base " +
                    std::to_string(cfg.base_set));
  }
  const std::uint64_t line = cfg.target.line_size;
  const std::uint64_t page = cfg.target.page_size;
  auto spy_addr = [&](std::uint64_t set, std::uint64_t way) {
    return VirtAddr{cfg.spy_buffer.value + way * page + set * line};
  };

  AttackPrograms out;
  for (std::uint32_t s = 0; s < usable; ++s) {
    for (std::uint32_t w = 0; w < cfg.target.ways; ++w) {
      out.spy.push_back(Instruction::load(spy_addr(s, w)));
    }
  }
  append_wait(out.spy, cfg.wait_cycles, cfg.wait_chunk);
  out.spy.push_back(Instruction::observe("probe-start"));
  for (std::uint64_t s = cfg.base_set; s < cfg.base_set + probed; ++s) {
    for (std::uint32_t w = 0; w < cfg.target.ways; ++w) {
      out.spy.push_back(Instruction::load(spy_addr(s, w)));
      out.spy.push_back(Instruction::observe("probe " + std::to_string(s)));
    }
  }
  out.spy.push_back(Instruction::halt());

  for (unsigned bit = 0; bit < secret.width; ++bit) {
    if (!secret.bit(bit)) continue;
    for (std::uint32_t j = 0; j < cfg.sets_per_bit; ++j) {
      const std::uint64_t set = cfg.base_set + bit * cfg.sets_per_bit + j;
      out.trojan.push_back(
          Instruction::load(VirtAddr{cfg.trojan_buffer.value + set * line}));
    }
  }
  out.trojan.push_back(Instruction::halt());
  return out;
}

Cycles midpoint(Cycles fast, Cycles slow) { return fast + (slow - fast) / 2; }

Secret decode_probe(const ProbeResult& r, const DecodeConfig& cfg, Cycles threshold) {
  Secret out{0, cfg.width};
  for (unsigned bit = 0; bit < cfg.width; ++bit) {
    const std::uint32_t first = cfg.base_set + bit * cfg.sets_per_bit;
    bool one = false;
    for (auto it = r.lower_bound(first);
         it != r.end() && it->first < first + cfg.sets_per_bit; ++it) {
      one |= cfg.fast_is_one ? it->second < threshold : it->second > threshold;
    }
    if (one) out.value |= std::uint64_t{1} << bit;
  }
  return out;
}

AttackPrograms gen_flush_latency_channel(const Secret& secret,
                                         const FlushLatencyConfig& cfg) {
  if (secret.value > cfg.l1d.lines()) {
    throw Error(ErrorCode::kConfig, "cannot dirty " + std::to_string(secret.value) +
                                        " lines of a " +
                                        std::to_string(cfg.l1d.lines()) + "-line L1D");
  }
  AttackPrograms out;
  // Consecutive lines fill each set to at most `ways` entries, so no store
  // evicts another dirty line.
  for (std::uint64_t i = 0; i < secret.value; ++i) {
    out.trojan.push_back(
        Instruction::store(VirtAddr{cfg.trojan_buffer.value + i * cfg.l1d.line_size}));
  }
  out.trojan.push_back(Instruction::halt());
  out.spy = {Instruction::observe("switch"), Instruction::halt()};
  return out;
}

AttackPrograms gen_kernel_text(const Secret& secret, const KernelTextConfig& cfg) {
  secret.validate();
  if (secret.width > kSyscallCount) {
    throw Error(ErrorCode::kConfig, "kernel text channel carries at most " +
                                        std::to_string(kSyscallCount) + " bits");
  }
  AttackPrograms out;
  for (unsigned bit = 0; bit < secret.width; ++bit) {
    if (secret.bit(bit)) out.trojan.push_back(Instruction::syscall(bit));
  }
  out.trojan.push_back(Instruction::halt());

  append_wait(out.spy, cfg.wait_cycles, cfg.wait_chunk);
  out.spy.push_back(Instruction::observe("probe-start"));
  for (unsigned bit = 0; bit < secret.width; ++bit) {
    out.spy.push_back(Instruction::syscall(bit));
    out.spy.push_back(Instruction::observe("probe " + std::to_string(bit)));
  }
  out.spy.push_back(Instruction::halt());
  return out;
}

Cycles kernel_text_threshold(const TimeModelParams& p) {
  return p.kernel_entry + p.kernel_exit + p.mispredict +
         kGlobalDataLines * p.llc_hit + kHandlerLines * midpoint(p.llc_hit, p.mem);
}

AttackPrograms gen_interrupt_channel(const Secret& secret, const InterruptConfig& cfg) {
  secret.validate();
  AttackPrograms out;
  if (secret.value > 0) {
    out.trojan.push_back(Instruction::compute(secret.value * cfg.stride));
  }
  out.trojan.push_back(Instruction::syscall(cfg.io_syscall));
  out.trojan.push_back(Instruction::halt());
  for (std::size_t k = 0; k < cfg.observer_samples; ++k) {
    out.spy.push_back(Instruction::compute(cfg.observer_chunk));
    out.spy.push_back(Instruction::observe("tick " + std::to_string(k)));
  }
  out.spy.push_back(Instruction::halt());
  return out;
}

DowngraderFragment gen_downgrader(const Secret& secret, const DowngraderConfig& cfg) {
  const Secret s{secret.value, cfg.width};
  s.validate();
  const Cycles worst = s.count() - 1;
  if (cfg.pad < worst) {
    throw Error(ErrorCode::kConfig, "downgrader pad " + std::to_string(cfg.pad) +
                                        " is below its worst-case work " +
                                        std::to_string(worst));
  }
  DowngraderFragment out;
  out.hi = {Instruction::compute(s.value), Instruction::halt()};
  out.observer = {Instruction::observe("handoff"), Instruction::halt()};
  // A one-cycle slice: the work is in flight when the timer fires, so the
  // pad alone decides when the observer runs.
  out.hi_slice = 1;
  out.hi_pad = cfg.pad + cfg.switch_overhead;
  return out;
}

}  // namespace timeprot
