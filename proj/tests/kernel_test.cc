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

#include "timeprot/kernel.h"

#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

namespace timeprot {
namespace {

DomainConfig domain(std::string name, std::vector<Colour> colours, Program program,
                    Cycles slice = 10000) {
  DomainConfig d;
  d.name = std::move(name);
  d.colours = std::move(colours);
  d.program = std::move(program);
  d.slice = slice;
  return d;
}

MachineConfig two_domains(Program hi, Program lo) {
  MachineConfig c;
  c.domains = {domain("hi", {8, 9, 10, 11, 12, 13, 14}, std::move(hi)),
               domain("lo", {0, 1, 2, 3, 4, 5, 6, 7}, std::move(lo))};
  return c;
}

// Steps until every domain halts; the bound keeps broken tests finite.
Trace run_to_end(Machine& m, std::size_t budget = 1'000'000) {
  while (!m.finished() && budget-- > 0) m.step();
  EXPECT_TRUE(m.finished());
  return m.trace();
}

std::vector<Event> of_kind(const Trace& t, EventKind k) {
  std::vector<Event> out;
  for (const Event& e : t) {
    if (e.kind == k) out.push_back(e);
  }
  return out;
}

const CacheGeometry kLlc{1024, 8, 64, 4096};

TEST(FrameAllocator, FrameHasRequestedColour) {
  FrameAllocator a(4096, kLlc);
  const Colour c = 3;
  for (int i = 0; i < 20; ++i) {
    const Frame f = a.alloc(0, std::span(&c, 1));
    EXPECT_EQ(f.value % 16, 3u);
  }
}

TEST(FrameAllocator, DisjointDomainsGetDisjointColours) {
  FrameAllocator a(4096, kLlc);
  const std::vector<Colour> c0 = {0, 1, 2}, c1 = {5, 6};
  for (int i = 0; i < 500; ++i) {
    a.alloc(0, c0);
    a.alloc(1, c1);
  }
  std::map<DomainId, std::set<Colour>> seen;
  for (const auto& [f, owner] : a.log()) seen[owner].insert(colour_of_frame(f, kLlc));
  for (Colour c : seen[0]) EXPECT_TRUE(c <= 2) << c;
  for (Colour c : seen[1]) EXPECT_TRUE(c == 5 || c == 6) << c;
  EXPECT_EQ(seen[0].size(), 2u);  // lowest colour fills first
}

TEST(FrameAllocator, EmptyPoolThrows) {
  FrameAllocator a(16, kLlc);  // one frame per colour
  const Colour c = 4;
  a.alloc(0, std::span(&c, 1));
  try {
    a.alloc(0, std::span(&c, 1));
    FAIL() << "expected ColourExhausted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kColourExhausted);
  }
}

TEST(FrameAllocator, PureFormLeavesInputUntouched) {
  const FrameAllocator a(64, kLlc);
  const Colour c = 2;
  const auto [f1, a1] = alloc_frame(a, 0, std::span(&c, 1));
  const auto [f2, a2] = alloc_frame(a, 0, std::span(&c, 1));
  EXPECT_EQ(f1, f2);
  EXPECT_EQ(a.free_count(2), a1.free_count(2) + 1);
}

TEST(FrameAllocator, EveryFrameInOwnersColours) {
  std::mt19937 rng(17);
  FrameAllocator a(65536, kLlc);
  std::map<DomainId, std::vector<Colour>> colours;
  for (DomainId d = 0; d < 4; ++d) {
    for (Colour c = d * 4; c < d * 4 + 1 + rng() % 4; ++c) colours[d].push_back(c);
  }
  for (int i = 0; i < 2000; ++i) {
    const DomainId d = rng() % 4;
    a.alloc(d, colours[d]);
  }
  for (const auto& [f, owner] : a.log()) {
    const auto& cs = colours[owner];
    EXPECT_NE(std::find(cs.begin(), cs.end(), colour_of_frame(f, kLlc)), cs.end());
  }
}

TEST(MachineConfig, OverlappingColoursRejected) {
  MachineConfig c = two_domains({}, {});
  c.domains[1].colours = {7, 8};
  EXPECT_THROW(c.validate(), Error);
  c.protections.colour_partitioning = false;
  EXPECT_NO_THROW(c.validate());
}

TEST(MachineConfig, KernelColourAndIrqsChecked) {
  MachineConfig c = two_domains({}, {});
  c.domains[0].colours.push_back(15);
  EXPECT_THROW(c.validate(), Error);
  c = two_domains({}, {});
  c.domains[0].irqs = {3};
  c.domains[1].irqs = {3};
  EXPECT_THROW(c.validate(), Error);
}

TEST(DefaultPad, WorstCaseFlushPlusEntry) {
  const HardwareConfig hw;
  EXPECT_EQ(default_pad(hw), 20u + 256u * 10u + 50u);
}

TEST(KernelClone, ImageWithinDomainColours) {
  Machine m(two_domains({}, {}));
  for (const Domain& d : m.domains()) {
    ASSERT_FALSE(d.kernel_image.empty());
    for (Frame f : d.kernel_image) {
      const Colour c = colour_of_frame(f, m.config().hw.llc);
      const auto& cs = d.config.colours;
      EXPECT_NE(std::find(cs.begin(), cs.end(), c), cs.end());
    }
  }
}

TEST(KernelClone, ImagesOccupyDisjointSets) {
  Machine m(two_domains({}, {}));
  const CacheGeometry& llc = m.config().hw.llc;
  std::vector<std::set<std::uint32_t>> sets(2);
  for (DomainId d = 0; d < 2; ++d) {
    for (Frame f : m.domains()[d].kernel_image) {
      for (std::uint64_t off = 0; off < llc.page_size; off += llc.line_size) {
        sets[d].insert(static_cast<std::uint32_t>(
            (f.value * llc.page_size + off) / llc.line_size % llc.sets));
      }
    }
  }
  for (std::uint32_t s : sets[0]) EXPECT_FALSE(sets[1].contains(s));
}

TEST(KernelClone, OffSharesOneImage) {
  MachineConfig c = two_domains({}, {});
  c.protections.kernel_clone = false;
  Machine m(c);
  EXPECT_EQ(m.domains()[0].kernel_image, std::vector<Frame>{m.shared_text()});
  EXPECT_EQ(m.domains()[1].kernel_image, std::vector<Frame>{m.shared_text()});
}

TEST(Step, ComputeAdvancesExactly) {
  Machine m(two_domains({Instruction::compute(5)}, {}));
  const Cycles before = m.now();
  m.step();
  EXPECT_EQ(m.now() - before, 5u);
}

TEST(Step, ColdLoadCostsMemoryPlusTlbMiss) {
  Machine m(two_domains({Instruction::load(VirtAddr{0x1000})}, {}));
  const TimeModelParams& p = m.config().hw.params;
  const Cycles before = m.now();
  const auto events = m.step();
  EXPECT_EQ(m.now() - before, p.mem + p.tlb_miss_penalty);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].value, 130u);
}

TEST(Step, TimerDuringKernelEntryDefersSwitch) {
  const Cycles slice = 1000;
  MachineConfig c = two_domains(
      {Instruction::compute(slice - 1), Instruction::syscall(), Instruction::halt()},
      {Instruction::halt()});
  c.domains[0].slice = slice;
  Machine m(c);
  const Cycles pad = m.domains()[0].pad;
  const Trace t = run_to_end(m);
  const auto exits = of_kind(t, EventKind::kSyscallExit);
  const auto begins = of_kind(t, EventKind::kSwitchBegin);
  const auto ends = of_kind(t, EventKind::kSwitchEnd);
  ASSERT_FALSE(exits.empty());
  ASSERT_FALSE(begins.empty());
  // The timer expired at `slice`, one cycle into the kernel entry.
  EXPECT_GT(exits[0].time, slice);
  EXPECT_EQ(begins[0].time, exits[0].time);
  EXPECT_EQ(ends[0].time, slice + pad);
}

TEST(Step, SecretLoadUsesBoundSecret) {
  MachineConfig c = two_domains({Instruction::secret_load(VirtAddr{0x2000}, 64)}, {});
  c.domains[0].secret = 3;
  Machine m(c);
  m.step();
  const PhysAddr pa = m.translate(0, VirtAddr{0x2000 + 3 * 64});
  EXPECT_TRUE(m.march().flushable.l1d.contains(pa));
}

TEST(Step, UnmappedAddressFaults) {
  Machine m(two_domains({Instruction::load(VirtAddr{16 * 4096})}, {}));
  try {
    m.step();
    FAIL() << "expected AddressFault";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAddressFault);
  }
}

Program dirty_lines(std::size_t k) {
  Program p;
  for (std::size_t i = 0; i < k; ++i) p.push_back(Instruction::store(VirtAddr{i * 64}));
  p.push_back(Instruction::halt());
  return p;
}

TEST(DomainSwitch, PadHidesDirtyCount) {
  Cycles first_end = 0;
  for (std::size_t k : {0u, 100u}) {
    Machine m(two_domains(dirty_lines(k), {Instruction::observe("x")}));
    const Trace t = run_to_end(m);
    const auto ends = of_kind(t, EventKind::kSwitchEnd);
    ASSERT_FALSE(ends.empty());
    if (k == 0) {
      first_end = ends[0].time;
    } else {
      EXPECT_EQ(ends[0].time, first_end);
    }
  }
}

TEST(DomainSwitch, ZeroPadOverruns) {
  MachineConfig c = two_domains({Instruction::compute(10000), Instruction::halt()},
                                {Instruction::halt()});
  c.domains[0].pad = 0;
  Machine m(c);
  try {
    run_to_end(m);
    FAIL() << "expected PadOverrun";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPadOverrun);
  }
}

TEST(DomainSwitch, FlushableStateInvalidAfterSwitch) {
  MachineConfig c = two_domains(
      {Instruction::load(VirtAddr{0}), Instruction::store(VirtAddr{64}),
       Instruction::syscall(2), Instruction::halt()},
      {Instruction::halt()});
  Machine m(c);
  while (!m.finished()) {
    const auto events = m.step();
    if (!events.empty() && events.back().kind == EventKind::kSwitchEnd) break;
  }
  const FlushableState& f = m.march().flushable;
  EXPECT_EQ(f.l1i.valid_count(), 0u);
  EXPECT_EQ(f.l1d.valid_count(), 0u);
  EXPECT_EQ(f.tlb.valid_count(), 0u);
  EXPECT_EQ(f.predictor.valid_count(), 0u);
}

TEST(Irq, LoIrqDuringHiSliceWaitsForLo) {
  Program ticks(200, Instruction::compute(10));
  MachineConfig c = two_domains(ticks, ticks);
  c.domains[1].irqs = {4};
  Machine m(c);
  m.irq_schedule(4, 500);  // inside Hi's first slice
  const Trace t = run_to_end(m);
  const auto delivered = of_kind(t, EventKind::kIrqDelivered);
  const auto ends = of_kind(t, EventKind::kSwitchEnd);
  ASSERT_EQ(delivered.size(), 1u);
  EXPECT_EQ(delivered[0].domain, 1u);
  EXPECT_EQ(delivered[0].time, ends[0].time + m.config().hw.params.kernel_entry);
}

TEST(Irq, OwnedByCurrentDeliveredAtFirePlusEntry) {
  Program ticks(200, Instruction::compute(10));
  MachineConfig c = two_domains(ticks, ticks);
  c.domains[0].irqs = {4};
  Machine m(c);
  m.irq_schedule(4, 500);
  const Trace t = run_to_end(m);
  const auto delivered = of_kind(t, EventKind::kIrqDelivered);
  ASSERT_EQ(delivered.size(), 1u);
  EXPECT_EQ(delivered[0].domain, 0u);
  EXPECT_EQ(delivered[0].time, 500 + m.config().hw.params.kernel_entry);
}

TEST(Irq, UnownedThrows) {
  Machine m(two_domains({}, {}));
  try {
    m.irq_schedule(9, 10);
    FAIL() << "expected UnknownIrq";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownIrq);
  }
}

TEST(Irq, PartitioningOffDeliversToCurrent) {
  Program ticks(200, Instruction::compute(10));
  MachineConfig c = two_domains(ticks, ticks);
  c.domains[1].irqs = {4};
  c.protections.irq_partitioning = false;
  Machine m(c);
  m.irq_schedule(4, 500);
  const auto delivered = of_kind(run_to_end(m), EventKind::kIrqDelivered);
  ASSERT_EQ(delivered.size(), 1u);
  EXPECT_EQ(delivered[0].domain, 0u);
}

TEST(Filler, RunsDuringPadAndStopsAtMargin) {
  MachineConfig c = two_domains({Instruction::halt()}, {Instruction::halt()});
  c.domains[0].filler = Program(5000, Instruction::compute(10));
  c.domains[0].filler_margin = 200;
  Machine m(c);
  const Trace t = run_to_end(m);
  const auto ends = of_kind(t, EventKind::kSwitchEnd);
  const auto begins = of_kind(t, EventKind::kSwitchBegin);
  const Cycles deadline = c.domains[0].slice + m.domains()[0].pad;
  ASSERT_FALSE(ends.empty());
  EXPECT_EQ(ends[0].time, deadline);
  EXPECT_GE(begins[0].time + 200, deadline);
  EXPECT_LT(begins[0].time, deadline);
}

// Random programs over a small address space, mixing every user operation.
Program random_program(std::mt19937_64& rng, std::size_t n, bool with_halt) {
  Program p;
  for (std::size_t i = 0; i < n; ++i) {
    const VirtAddr v{(rng() % (16 * 4096)) & ~std::uint64_t{63}};
    switch (rng() % 6) {
      case 0: p.push_back(Instruction::load(v)); break;
      case 1: p.push_back(Instruction::store(v)); break;
      case 2: p.push_back(Instruction::compute(1 + rng() % 300)); break;
      case 3: p.push_back(Instruction::observe("o")); break;
      case 4: p.push_back(Instruction::syscall(static_cast<std::uint32_t>(rng() % kSyscallCount))); break;
      case 5:
        if (with_halt && rng() % 8 == 0) p.push_back(Instruction::halt());
        break;
    }
  }
  return p;
}

TEST(Invariants, PadConstancy) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    MachineConfig c = two_domains(random_program(rng, 400, true), random_program(rng, 400, true));
    c.domains[0].slice = 2000 + rng() % 3000;
    c.domains[1].slice = 2000 + rng() % 3000;
    Machine m(c);
    while (!m.finished()) {
      const DomainId from = m.current();
      const Cycles start = m.slice_start();
      for (const Event& e : m.step()) {
        if (e.kind != EventKind::kSwitchEnd) continue;
        ASSERT_EQ(e.time - start, c.domains[from].slice + m.domains()[from].pad);
      }
    }
  }
}

TEST(Invariants, ColourDisjointness) {
  MachineConfig c = two_domains({}, {});
  c.domains.push_back(domain("third", {12}, {}));
  c.domains[0].colours = {8, 9, 10, 11};
  Machine m(c);
  for (DomainId a = 0; a < 3; ++a) {
    const auto sa = m.llc_sets_of_domain(a);
    for (DomainId b = a + 1; b < 3; ++b) {
      const auto sb = m.llc_sets_of_domain(b);
      std::vector<std::uint32_t> both;
      std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                            std::back_inserter(both));
      EXPECT_TRUE(both.empty()) << a << " vs " << b;
    }
  }
}

TEST(Invariants, ColourSharingWithoutClone) {
  MachineConfig c = two_domains({}, {});
  c.protections.kernel_clone = false;
  Machine m(c);
  const auto s0 = m.llc_sets_of_domain(0);
  const auto s1 = m.llc_sets_of_domain(1);
  std::vector<std::uint32_t> both;
  std::set_intersection(s0.begin(), s0.end(), s1.begin(), s1.end(), std::back_inserter(both));
  EXPECT_FALSE(both.empty());
}

TEST(Invariants, MaskingSoundness) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    MachineConfig c = two_domains(random_program(rng, 300, false), random_program(rng, 300, false));
    c.domains[0].irqs = {1, 2};
    c.domains[1].irqs = {3};
    Machine m(c);
    std::map<IrqId, DomainId> owner = {{1, 0}, {2, 0}, {3, 1}};
    for (int i = 0; i < 20; ++i) {
      m.irq_schedule(static_cast<IrqId>(1 + rng() % 3), rng() % 60000);
    }
    for (const Event& e : run_to_end(m)) {
      if (e.kind == EventKind::kIrqDelivered) {
        ASSERT_EQ(e.domain, owner.at(static_cast<IrqId>(e.value)));
      }
    }
  }
}

TEST(Invariants, SchedulerDeterminism) {
  std::mt19937_64 rng(31);
  std::vector<std::pair<DomainId, Cycles>> reference;
  for (int trial = 0; trial < 20; ++trial) {
    MachineConfig c = two_domains(random_program(rng, 500, true), random_program(rng, 500, true));
    c.domains[0].slice = 3000;
    c.domains[1].slice = 4000;
    Machine m(c);
    std::vector<std::pair<DomainId, Cycles>> schedule;
    for (const Event& e : run_to_end(m)) {
      if (e.kind == EventKind::kSwitchEnd) schedule.emplace_back(e.domain, e.time);
    }
    const std::size_t n = std::min(schedule.size(), reference.size());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(schedule[i], reference[i]);
    if (schedule.size() > reference.size()) reference = schedule;
  }
}

TEST(Invariants, TraceTimesNonDecreasing) {
  std::mt19937_64 rng(37);
  MachineConfig c = two_domains(random_program(rng, 2000, false), random_program(rng, 2000, false));
  c.domains[1].irqs = {1};
  Machine m(c);
  m.irq_schedule(1, 1234);
  const Trace t = run_to_end(m);
  for (std::size_t i = 1; i < t.size(); ++i) ASSERT_LE(t[i - 1].time, t[i].time);
}

TEST(Invariants, IdenticalConfigsGiveIdenticalTraces) {
  std::mt19937_64 rng(41);
  const MachineConfig c =
      two_domains(random_program(rng, 1000, false), random_program(rng, 1000, false));
  Machine a(c), b(c);
  EXPECT_EQ(run_to_end(a), run_to_end(b));
}

TEST(Mechanism, NamesRoundTrip) {
  for (Mechanism m : kAllMechanisms) {
    EXPECT_EQ(parse_mechanism(mechanism_name(m)), m);
    Protections p;
    disable(p, m);
    EXPECT_NE(p, Protections{});
  }
  EXPECT_EQ(parse_mechanism("color"), Mechanism::kColour);
  EXPECT_EQ(parse_mechanism("pad_enabled"), Mechanism::kPad);
  EXPECT_FALSE(parse_mechanism("nope"));
}

}  // namespace
}  // namespace timeprot
