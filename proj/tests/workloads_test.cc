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
#include <set>

#include <gtest/gtest.h>

#include "timeprot/harness.h"
#include "timeprot/scenario_file.h"

namespace timeprot {
namespace {

const CacheGeometry kL1d{64, 4, 64, 4096};
const CacheGeometry kLlc{1024, 8, 64, 4096};

std::size_t count_op(const Program& p, Opcode op) {
  return static_cast<std::size_t>(
      std::count_if(p.begin(), p.end(), [op](const Instruction& i) { return i.op == op; }));
}

ScenarioFile shipped(const std::string& name) {
  return parse_scenario(std::filesystem::path(TIMEPROT_SCENARIO_DIR) / (name + ".ini"));
}

TEST(Secret, BitsAndRange) {
  const Secret s{0b101, 3};
  EXPECT_TRUE(s.bit(0));
  EXPECT_FALSE(s.bit(1));
  EXPECT_TRUE(s.bit(2));
  EXPECT_EQ(s.count(), 8u);
  EXPECT_THROW((Secret{8, 3}.validate()), Error);
  EXPECT_EQ(all_secrets(8).size(), 256u);
  EXPECT_EQ(all_secrets(0).size(), 1u);
}

TEST(GenPrimeProbe, TrojanTouchesSelectedGroups) {
  PrimeProbeConfig cfg{kL1d, 1, 16};
  const AttackPrograms a = gen_prime_probe(Secret{0b101, 3}, cfg);
  std::set<std::uint64_t> groups;
  for (const Instruction& i : a.trojan) {
    if (i.op == Opcode::kLoad) groups.insert((i.a / 64) % 64 - cfg.base_set);
  }
  EXPECT_EQ(groups, (std::set<std::uint64_t>{0, 2}));
}

TEST(GenPrimeProbe, PrimeCoversCache) {
  const AttackPrograms a = gen_prime_probe(Secret{0, 8}, PrimeProbeConfig{kL1d});
  std::set<std::pair<std::uint64_t, std::uint64_t>> covered;  // (set, way page)
  for (const Instruction& i : a.spy) {
    if (i.op == Opcode::kObserve) break;
    if (i.op == Opcode::kLoad) covered.emplace((i.a / 64) % 64, i.a / 4096);
  }
  EXPECT_EQ(covered.size(), std::size_t{kL1d.sets} * kL1d.ways);
}

TEST(GenPrimeProbe, RejectsOversizedSecret) {
  EXPECT_THROW(gen_prime_probe(Secret{0, 8}, PrimeProbeConfig{kL1d, 8, 16}), Error);
}

TEST(GenPrimeProbe, Deterministic) {
  const PrimeProbeConfig cfg{kLlc, 1, 16, 1000};
  for (std::uint64_t v : {0u, 77u, 255u}) {
    const AttackPrograms a = gen_prime_probe(Secret{v, 8}, cfg);
    const AttackPrograms b = gen_prime_probe(Secret{v, 8}, cfg);
    EXPECT_EQ(a.trojan, b.trojan);
    EXPECT_EQ(a.spy, b.spy);
  }
}

TEST(DecodeProbe, AllFastIsZero) {
  ProbeResult r;
  for (std::uint32_t s = 16; s < 24; ++s) r[s] = 1;
  EXPECT_EQ(decode_probe(r, DecodeConfig{}, midpoint(1, 12)).value, 0u);
}

TEST(DecodeProbe, SlowGroupsAreOnes) {
  ProbeResult r;
  for (std::uint32_t s = 16; s < 24; ++s) r[s] = 1;
  r[16] = 12;
  r[18] = 12;
  EXPECT_EQ(decode_probe(r, DecodeConfig{}, midpoint(1, 12)).value, 0b101u);
  DecodeConfig reload;
  reload.fast_is_one = true;
  EXPECT_EQ(decode_probe(r, reload, midpoint(1, 12)).value, 0b11111010u);
}

TEST(Midpoint, RoundsDown) {
  EXPECT_EQ(midpoint(1, 12), 6u);
  EXPECT_EQ(midpoint(12, 100), 56u);
}

// decode(probe(run(gen(s)))) == s with every protection off.
class PrimeProbeRoundTrip : public ::testing::TestWithParam<const char*> {};

TEST_P(PrimeProbeRoundTrip, UnprotectedIsIdentity) {
  ScenarioFile f = shipped(GetParam());
  for (Mechanism m : kAllMechanisms) f.disable_mechanism(m);
  const auto& dec = std::get<ProbeDecoder>(f.scenario.decoder);
  for (const Secret& s : all_secrets(8)) {
    const LoView v = lo_view(run(f.scenario, s), f.scenario.lo);
    ASSERT_EQ(decode_probe(probe_result(v), dec.cfg, dec.threshold).value, s.value);
  }
}

TEST_P(PrimeProbeRoundTrip, ProtectedDecodesToConstant) {
  const ScenarioFile f = shipped(GetParam());
  const auto& dec = std::get<ProbeDecoder>(f.scenario.decoder);
  std::set<std::uint64_t> decoded;
  for (const Secret& s : all_secrets(8)) {
    const LoView v = lo_view(run(f.scenario, s), f.scenario.lo);
    decoded.insert(decode_probe(probe_result(v), dec.cfg, dec.threshold).value);
  }
  EXPECT_EQ(decoded.size(), 1u);
}

INSTANTIATE_TEST_SUITE_P(Shipped, PrimeProbeRoundTrip,
                         ::testing::Values("prime_probe_llc", "prime_probe_l1"));

TEST(GenFlushLatency, ExactlyKStores) {
  for (std::uint64_t k : {0u, 1u, 7u, 255u}) {
    const AttackPrograms a = gen_flush_latency_channel(Secret{k, 8}, FlushLatencyConfig{kL1d});
    EXPECT_EQ(count_op(a.trojan, Opcode::kStore), k);
    std::set<std::uint64_t> lines;
    for (const Instruction& i : a.trojan) {
      if (i.op == Opcode::kStore) lines.insert(i.a / 64);
    }
    EXPECT_EQ(lines.size(), k);
  }
  EXPECT_THROW(gen_flush_latency_channel(Secret{300, 9}, FlushLatencyConfig{kL1d}), Error);
}

std::vector<std::int64_t> observer_starts(const ScenarioFile& f) {
  std::vector<std::int64_t> out;
  for (const Secret& s : all_secrets(8)) {
    out.push_back(first_observe(lo_view(run(f.scenario, s), f.scenario.lo)));
  }
  return out;
}

TEST(FlushLatencyChannel, PadOffIsStrictlyIncreasing) {
  ScenarioFile f = shipped("flush_latency");
  f.disable_mechanism(Mechanism::kPad);
  const auto t = observer_starts(f);
  for (std::size_t k = 1; k < t.size(); ++k) ASSERT_LT(t[k - 1], t[k]) << k;
}

TEST(FlushLatencyChannel, PadOnIsConstant) {
  const auto t = observer_starts(shipped("flush_latency"));
  EXPECT_EQ(std::set<std::int64_t>(t.begin(), t.end()).size(), 1u);
}

TEST(GenKernelText, SyscallsFollowBits) {
  const AttackPrograms a = gen_kernel_text(Secret{0b1001, 4}, KernelTextConfig{});
  EXPECT_EQ(a.trojan, (Program{Instruction::syscall(0), Instruction::syscall(3),
                               Instruction::halt()}));
  EXPECT_EQ(count_op(a.spy, Opcode::kSyscall), 4u);
  EXPECT_THROW(gen_kernel_text(Secret{0, 13}, KernelTextConfig{}), Error);
}

TEST(GenInterrupt, DelayScalesWithSecret) {
  InterruptConfig cfg;
  const AttackPrograms a = gen_interrupt_channel(Secret{5, 8}, cfg);
  EXPECT_EQ(a.trojan.front(), Instruction::compute(5 * cfg.stride));
  EXPECT_EQ(count_op(a.trojan, Opcode::kSyscall), 1u);
  EXPECT_EQ(count_op(a.spy, Opcode::kObserve), cfg.observer_samples);
}

// Hand-off times of a downgrader machine over every secret.
std::set<Cycles> handoffs(unsigned width, Cycles pad, Cycles overhead) {
  std::set<Cycles> out;
  for (const Secret& s : all_secrets(width)) {
    const DowngraderFragment f = gen_downgrader(s, DowngraderConfig{width, pad, overhead});
    MachineConfig c;
    DomainConfig hi;
    hi.name = "hi";
    hi.colours = {8};
    hi.program = f.hi;
    hi.slice = f.hi_slice;
    hi.pad = f.hi_pad;
    DomainConfig lo;
    lo.name = "lo";
    lo.colours = {0};
    lo.program = f.observer;
    c.domains = {hi, lo};
    Machine m(c);
    while (!m.finished()) m.step();
    out.insert(first_observe(lo_view(m.trace(), 1)));
  }
  return out;
}

TEST(Downgrader, PaddedHandoffIsConstant) {
  const HardwareConfig hw;
  const Cycles overhead = flush_latency(hw.params, 0) + kGlobalDataLines * hw.params.mem;
  EXPECT_EQ(handoffs(8, 256, overhead).size(), 1u);
  EXPECT_EQ(handoffs(8, 255, overhead).size(), 1u);
}

TEST(Downgrader, ZeroWidthIsConstant) {
  EXPECT_EQ(handoffs(0, 0, 500).size(), 1u);
}

TEST(Downgrader, PadBelowWorkOverruns) {
  EXPECT_THROW(gen_downgrader(Secret{0, 8}, DowngraderConfig{8, 100, 500}), Error);
  // Pad for the work alone, nothing for the switch: the largest secret overruns.
  try {
    handoffs(8, 255, 0);
    FAIL() << "expected PadOverrun";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPadOverrun);
  }
}

}  // namespace
}  // namespace timeprot
