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

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

namespace timeprot {
namespace {

[[noreturn]] void invalid(const std::string& msg) {
  throw Error(ErrorCode::kValidation, msg);
}

std::string join(std::span<const Colour> colours) {
  std::string s;
  for (Colour c : colours) {
    if (!s.empty()) s += ',';
    s += std::to_string(c);
  }
  return s;
}

}  // namespace

std::optional<Mechanism> parse_mechanism(std::string_view name) {
  if (name == "flush" || name == "flush_on_switch") return Mechanism::kFlush;
  if (name == "colour" || name == "color" || name == "colour_partitioning") {
    return Mechanism::kColour;
  }
  if (name == "clone" || name == "kernel_clone") return Mechanism::kClone;
  if (name == "pad" || name == "pad_enabled") return Mechanism::kPad;
  if (name == "irq" || name == "irq_partitioning") return Mechanism::kIrq;
  return std::nullopt;
}

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kFlush: return "flush";
    case Mechanism::kColour: return "colour";
    case Mechanism::kClone: return "clone";
    case Mechanism::kPad: return "pad";
    case Mechanism::kIrq: return "irq";
  }
  return "?";
}

void disable(Protections& p, Mechanism m) {
  switch (m) {
    case Mechanism::kFlush: p.flush_on_switch = false; break;
    case Mechanism::kColour: p.colour_partitioning = false; break;
    case Mechanism::kClone: p.kernel_clone = false; break;
    case Mechanism::kPad: p.pad_enabled = false; break;
    case Mechanism::kIrq: p.irq_partitioning = false; break;
  }
}

void HardwareConfig::validate() const {
  l1i.validate();
  l1d.validate();
  llc.validate();
  tlb.validate();
  params.validate();
  if (l1i.page_size != llc.page_size || l1d.page_size != llc.page_size ||
      tlb.page_size != llc.page_size || tlb.line_size != tlb.page_size) {
    invalid("all geometries must share one page size (TLB line = page)");
  }
  if (l1i.line_size != llc.line_size || l1d.line_size != llc.line_size) {
    invalid("L1 and LLC must share one line size");
  }
  if (llc.page_size / llc.line_size < kGlobalDataFirstLine + kGlobalDataLines ||
      llc.page_size / llc.line_size < (kIrqHandlerSlot + 1) * kHandlerLines) {
    invalid("page too small for the kernel image layout");
  }
  if (memory_bytes == 0 || memory_bytes % page_size() != 0) {
    invalid("memory_bytes must be a non-zero multiple of the page size");
  }
  if (predictor_entries == 0 || (predictor_entries & (predictor_entries - 1)) != 0) {
    invalid("predictor_entries must be a power of two");
  }
}

Cycles default_pad(const HardwareConfig& hw) {
  return flush_latency(hw.params, hw.l1d.lines()) + hw.params.kernel_entry;
}

void MachineConfig::validate() const {
  hw.validate();
  if (domains.empty()) invalid("at least one domain is required");
  const std::uint32_t colours = num_colours(hw.llc);
  std::set<Colour> used_colours;
  std::set<IrqId> used_irqs;
  std::set<std::string> names;
  for (const DomainConfig& d : domains) {
    if (!names.insert(d.name).second) invalid("duplicate domain name '" + d.name + "'");
    if (d.colours.empty()) invalid("domain '" + d.name + "' has no colours");
    if (d.slice == 0) invalid("domain '" + d.name + "' needs a non-zero slice");
    if (d.pages == 0) invalid("domain '" + d.name + "' maps no pages");
    for (Colour c : d.colours) {
      if (c >= colours) {
        invalid("domain '" + d.name + "' colour " + std::to_string(c) +
                " out of range (" + std::to_string(colours) + " colours)");
      }
      if (protections.colour_partitioning) {
        if (c == hw.kernel_colour()) {
          invalid("domain '" + d.name + "' uses the kernel colour " +
                  std::to_string(c));
        }
        if (!used_colours.insert(c).second) {
          invalid("colour " + std::to_string(c) +
                  " assigned to more than one domain");
        }
      }
    }
    for (IrqId irq : d.irqs) {
      if (!used_irqs.insert(irq).second) {
        invalid("irq " + std::to_string(irq) + " owned by more than one domain");
      }
    }
    for (const Device& dev : d.devices) {
      if (dev.syscall >= kSyscallCount) invalid("device syscall number out of range");
    }
  }
  for (const DomainConfig& d : domains) {
    for (const Device& dev : d.devices) {
      if (!used_irqs.contains(dev.irq)) {
        invalid("device irq " + std::to_string(dev.irq) + " has no owner");
      }
    }
  }
}

Cycles MachineConfig::pad_of(DomainId d) const {
  return domains.at(d).pad.value_or(default_pad(hw));
}

FrameAllocator::FrameAllocator(std::uint64_t frames, const CacheGeometry& llc)
    : llc_(llc), free_(num_colours(llc)) {
  for (std::uint64_t f = 0; f < frames; ++f) {
    free_[colour_of_frame(Frame{f}, llc_)].push_back(f);
  }
}

Frame FrameAllocator::alloc(DomainId owner, std::span<const Colour> colours) {
  std::vector<Colour> sorted(colours.begin(), colours.end());
  std::sort(sorted.begin(), sorted.end());
  for (Colour c : sorted) {
    if (c < free_.size() && !free_[c].empty()) {
      const Frame f{free_[c].front()};
      free_[c].pop_front();
      log_.emplace_back(f, owner);
      return f;
    }
  }
  throw Error(ErrorCode::kColourExhausted,
              "no free frame in colours {" + join(colours) + "}");
}

std::size_t FrameAllocator::free_count(Colour colour) const {
  return colour < free_.size() ? free_[colour].size() : 0;
}

std::pair<Frame, FrameAllocator> alloc_frame(FrameAllocator a, DomainId owner,
                                             std::span<const Colour> colours) {
  const Frame f = a.alloc(owner, colours);
  return {f, std::move(a)};
}

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::kRetired: return "retired";
    case EventKind::kObserve: return "observe";
    case EventKind::kIrqDelivered: return "irq-delivered";
    case EventKind::kSwitchBegin: return "switch-begin";
    case EventKind::kSwitchEnd: return "switch-end";
    case EventKind::kSyscallEnter: return "syscall-enter";
    case EventKind::kSyscallExit: return "syscall-exit";
  }
  return "?";
}

Machine::Machine(MachineConfig config)
    : config_((config.validate(), std::move(config))),
      allocator_(config_.hw.frames(), config_.hw.llc),
      march_{FlushableState{CacheState(config_.hw.l1i), CacheState(config_.hw.l1d),
                            TlbState(config_.hw.tlb),
                            PredictorState(config_.hw.predictor_entries)},
             PartitionableState{CacheState(config_.hw.llc)}} {
  const Colour kc = config_.hw.kernel_colour();
  shared_text_ = allocator_.alloc(kKernelOwner, std::span(&kc, 1));
  global_data_ = allocator_.alloc(kKernelOwner, std::span(&kc, 1));

  for (DomainId id = 0; id < config_.domains.size(); ++id) {
    Domain d;
    d.id = id;
    d.config = config_.domains[id];
    d.pad = config_.pad_of(id);
    d.kernel_image = {shared_text_};
    domains_.push_back(std::move(d));
  }
  for (Domain& d : domains_) {
    const std::vector<Colour> colours = effective_colours(d.id);
    for (std::size_t p = 0; p < d.config.pages; ++p) {
      d.pages.push_back(allocator_.alloc(d.id, colours));
    }
  }
  if (config_.protections.kernel_clone) {
    for (DomainId id = 0; id < domains_.size(); ++id) kernel_clone(id);
  }
  // Boot leaves the global kernel data cached, as every switch does.
  touch_global_data();
}

std::vector<Colour> Machine::effective_colours(DomainId d) const {
  if (config_.protections.colour_partitioning) {
    return domains_.at(d).config.colours;
  }
  std::vector<Colour> all(num_colours(config_.hw.llc));
  std::iota(all.begin(), all.end(), Colour{0});
  return all;
}

void Machine::kernel_clone(DomainId d) {
  const std::vector<Colour> colours = effective_colours(d);
  domains_.at(d).kernel_image = {allocator_.alloc(d, colours)};
}

bool Machine::finished() const {
  return std::all_of(domains_.begin(), domains_.end(),
                     [](const Domain& d) { return d.halted; });
}

PhysAddr Machine::translate(DomainId d, VirtAddr v) const {
  const Domain& dom = domains_.at(d);
  const std::uint64_t page = config_.hw.page_size();
  const std::uint64_t vpn = v.value / page;
  if (vpn >= dom.pages.size()) {
    throw Error(ErrorCode::kAddressFault,
                "domain '" + dom.config.name + "' accessed unmapped address " +
                    std::to_string(v.value));
  }
  return PhysAddr{dom.pages[vpn].value * page + v.value % page};
}

std::vector<std::uint32_t> Machine::llc_sets_of_domain(DomainId d) const {
  const Domain& dom = domains_.at(d);
  const CacheGeometry& llc = config_.hw.llc;
  std::set<std::uint32_t> sets;
  auto add_frame = [&](Frame f) {
    for (std::uint64_t off = 0; off < llc.page_size; off += llc.line_size) {
      sets.insert(set_index(PhysAddr{f.value * llc.page_size + off}, llc));
    }
  };
  for (Frame f : dom.pages) add_frame(f);
  for (Frame f : dom.kernel_image) add_frame(f);
  return {sets.begin(), sets.end()};
}

DomainId Machine::owner_of(IrqId irq) const {
  for (const Domain& d : domains_) {
    const auto& irqs = d.config.irqs;
    if (std::find(irqs.begin(), irqs.end(), irq) != irqs.end()) return d.id;
  }
  throw Error(ErrorCode::kUnknownIrq, "irq " + std::to_string(irq) + " has no owner");
}

void Machine::irq_schedule(IrqId irq, Cycles fire) {
  owner_of(irq);
  pending_.push_back(PendingIrq{irq, fire, irq_seq_++});
}

HitLevel Machine::data_access(PhysAddr addr, AccessKind kind) {
  if (march_.flushable.l1d.access(addr, kind).hit) return HitLevel::kL1;
  // Dirty L1 victims are written back to memory; the LLC is filled on
  // demand only.
  return march_.partitionable.llc.access(addr, AccessKind::kRead).hit
             ? HitLevel::kLlc
             : HitLevel::kMemory;
}

HitLevel Machine::fetch(PhysAddr addr) {
  if (march_.flushable.l1i.access(addr, AccessKind::kRead).hit) return HitLevel::kL1;
  return march_.partitionable.llc.access(addr, AccessKind::kRead).hit
             ? HitLevel::kLlc
             : HitLevel::kMemory;
}

Cycles Machine::touch_global_data() {
  const std::uint64_t line = config_.hw.llc.line_size;
  const std::uint64_t base = global_data_.value * config_.hw.page_size();
  Cycles t = 0;
  for (std::uint32_t i = 0; i < kGlobalDataLines; ++i) {
    const PhysAddr a{base + (kGlobalDataFirstLine + i) * line};
    t += access_latency(config_.hw.params, {data_access(a, AccessKind::kRead), true});
  }
  return t;
}

// Body of every trap handler: dispatch branch, handler text, global data.
// Kernel accesses bypass the TLB.
Cycles Machine::kernel_path(std::uint32_t slot) {
  const TimeModelParams& p = config_.hw.params;
  const std::uint64_t line = config_.hw.llc.line_size;
  const std::uint64_t text =
      domains_[current_].kernel_image.front().value * config_.hw.page_size() +
      std::uint64_t{slot} * kHandlerLines * line;
  Cycles t = march_.flushable.predictor.predict(text / line) ? p.predict_ok
                                                              : p.mispredict;
  for (std::uint32_t i = 0; i < kHandlerLines; ++i) {
    t += access_latency(p, {fetch(PhysAddr{text + i * line}), true});
  }
  return t + touch_global_data();
}

void Machine::emit(DomainId d, EventKind kind, Cycles value, std::string label) {
  trace_.push_back(Event{clock_.now(), d, kind, value, std::move(label)});
}

std::optional<std::size_t> Machine::deliverable_irq() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    const PendingIrq& p = pending_[i];
    if (p.fire > clock_.now()) continue;
    if (config_.protections.irq_partitioning && owner_of(p.irq) != current_) {
      continue;
    }
    if (!best || std::tie(p.fire, p.seq) <
                     std::tie(pending_[*best].fire, pending_[*best].seq)) {
      best = i;
    }
  }
  return best;
}

void Machine::deliver_irq(std::size_t index) {
  const IrqId irq = pending_[index].irq;
  pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(index));
  const TimeModelParams& p = config_.hw.params;
  clock_ = advance(clock_, p.kernel_entry);
  emit(current_, EventKind::kIrqDelivered, irq);
  clock_ = advance(clock_, kernel_path(kIrqHandlerSlot));
  clock_ = advance(clock_, p.kernel_exit);
}

void Machine::execute(Domain& d, const Instruction& ins, bool filler) {
  const TimeModelParams& p = config_.hw.params;
  const Cycles start = clock_.now();
  auto memory_op = [&](VirtAddr v, AccessKind kind) {
    const PhysAddr pa = translate(d.id, v);
    const bool tlb_hit =
        march_.flushable.tlb.lookup(d.id, v.value / config_.hw.page_size());
    const HitLevel level = data_access(pa, kind);
    clock_ = advance(clock_, access_latency(p, {level, tlb_hit}));
  };

  switch (ins.op) {
    case Opcode::kLoad:
      memory_op(VirtAddr{ins.a}, AccessKind::kRead);
      break;
    case Opcode::kStore:
      memory_op(VirtAddr{ins.a}, AccessKind::kWrite);
      break;
    case Opcode::kSecretLoad:
      if (!d.config.secret) {
        throw Error(ErrorCode::kConfig,
                    "domain '" + d.config.name + "' has no secret for SECRET_LOAD");
      }
      memory_op(VirtAddr{ins.a + *d.config.secret * ins.b}, AccessKind::kRead);
      break;
    case Opcode::kCompute:
      clock_ = advance(clock_, ins.a);
      break;
    case Opcode::kObserve:
      emit(d.id, EventKind::kObserve, 0, ins.label);
      return;
    case Opcode::kSyscall: {
      emit(d.id, EventKind::kSyscallEnter, ins.a);
      clock_ = advance(clock_, p.kernel_entry);
      clock_ = advance(clock_, kernel_path(static_cast<std::uint32_t>(ins.a)));
      clock_ = advance(clock_, p.kernel_exit);
      if (!filler) {
        for (const Device& dev : d.config.devices) {
          if (dev.syscall == ins.a) irq_schedule(dev.irq, clock_.now() + dev.latency);
        }
      }
      emit(d.id, EventKind::kSyscallExit, ins.a);
      break;
    }
    case Opcode::kHalt:
      if (!filler) d.halted = true;
      break;
  }
  emit(d.id, EventKind::kRetired, clock_.now() - start);
}

void Machine::domain_switch() {
  Domain& from = domains_[current_];
  const TimeModelParams& p = config_.hw.params;
  emit(from.id, EventKind::kSwitchBegin);
  const Cycles begin = clock_.now();
  // Global kernel data is touched in a fixed order, then the flush leaves
  // no flushable state for the next domain.
  clock_ = advance(clock_, touch_global_data());
  if (config_.protections.flush_on_switch) {
    const std::size_t dirty = flush_flushable_inplace(march_);
    clock_ = advance(clock_, flush_latency(p, dirty));
  }
  const Cycles work = clock_.now() - begin;
  if (config_.protections.pad_enabled) {
    const Cycles deadline = slice_start_ + from.config.slice + from.pad;
    if (clock_.now() > deadline) {
      throw Error(ErrorCode::kPadOverrun,
                  "switch from '" + from.config.name + "' finished at " +
                      std::to_string(clock_.now()) + ", after padded deadline " +
                      std::to_string(deadline));
    }
    clock_ = Clock(deadline);
  }
  in_filler_ = false;
  current_ = static_cast<DomainId>((current_ + 1) % domains_.size());
  slice_start_ = clock_.now();
  emit(current_, EventKind::kSwitchEnd, work);
}

std::span<const Event> Machine::step() {
  const std::size_t first = trace_.size();
  if (finished()) return {};
  Domain& d = domains_[current_];
  const bool timer = clock_.now() >= slice_start_ + d.config.slice;
  const bool has_filler = config_.protections.pad_enabled && !d.config.filler.empty();

  if (in_filler_) {
    // Filler runs until the safety margin before the padded deadline.
    const Cycles deadline = slice_start_ + d.config.slice + d.pad;
    const bool margin_reached =
        clock_.now() + d.config.filler_margin >= deadline;
    if (margin_reached || d.filler_pc >= d.config.filler.size()) {
      domain_switch();
    } else {
      const Instruction ins = d.config.filler[d.filler_pc++];
      execute(d, ins, /*filler=*/true);
      if (ins.op == Opcode::kHalt) d.filler_pc = d.config.filler.size();
    }
  } else if (timer || (d.halted && !deliverable_irq())) {
    if (has_filler && d.filler_pc < d.config.filler.size()) {
      in_filler_ = true;
    } else {
      domain_switch();
    }
  } else if (const auto irq = deliverable_irq()) {
    deliver_irq(*irq);
  } else if (d.pc < d.config.program.size()) {
    const Instruction ins = d.config.program[d.pc++];
    execute(d, ins, /*filler=*/false);
  } else {
    // Running off the end of a program is an implicit HALT.
    d.halted = true;
  }
  return std::span<const Event>(trace_).subspan(first);
}

}  // namespace timeprot
