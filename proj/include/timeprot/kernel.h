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

// The protection kernel for one time-multiplexed core. Domains get frames
// of their own colours and optionally their own kernel image. Switches
// flush core-local state and pad to a fixed deadline; interrupts reach only
// their owner.

#ifndef TIMEPROT_KERNEL_H_
#define TIMEPROT_KERNEL_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "timeprot/march.h"
#include "timeprot/program.h"
#include "timeprot/timemodel.h"
#include "timeprot/types.h"

namespace timeprot {

struct Protections {
  bool flush_on_switch = true;
  bool colour_partitioning = true;
  bool kernel_clone = true;
  bool pad_enabled = true;
  bool irq_partitioning = true;

  friend bool operator==(const Protections&, const Protections&) = default;
};

enum class Mechanism { kFlush, kColour, kClone, kPad, kIrq };

inline constexpr Mechanism kAllMechanisms[] = {
    Mechanism::kFlush, Mechanism::kColour, Mechanism::kClone, Mechanism::kPad,
    Mechanism::kIrq};

// Accepts the short names (flush, colour, clone, pad, irq) and the field
// names of Protections.
std::optional<Mechanism> parse_mechanism(std::string_view name);
const char* mechanism_name(Mechanism m);
void disable(Protections& p, Mechanism m);

struct HardwareConfig {
  CacheGeometry l1i{64, 4, 64, 4096};
  CacheGeometry l1d{64, 4, 64, 4096};
  CacheGeometry llc{1024, 8, 64, 4096};
  CacheGeometry tlb{16, 4, 4096, 4096};
  std::size_t predictor_entries = 64;
  std::uint64_t memory_bytes = std::uint64_t{16} << 20;
  TimeModelParams params;

  void validate() const;
  std::uint32_t page_size() const { return llc.page_size; }
  std::uint64_t frames() const { return memory_bytes / page_size(); }
  // Colour holding the shared kernel image and global kernel data.
  Colour kernel_colour() const { return num_colours(llc) - 1; }

  friend bool operator==(const HardwareConfig&, const HardwareConfig&) = default;
};

// Worst-case flush plus one kernel entry: flush_base +
// L1D lines * writeback_per_line + kernel_entry.
Cycles default_pad(const HardwareConfig& hw);

// A SYSCALL with number `syscall` starts an I/O whose completion raises
// `irq` `latency` cycles after the syscall returns.
struct Device {
  std::uint32_t syscall = 0;
  IrqId irq = 0;
  Cycles latency = 0;
  friend bool operator==(const Device&, const Device&) = default;
};

struct DomainConfig {
  std::string name;
  std::vector<Colour> colours;
  Cycles slice = 10000;
  std::optional<Cycles> pad;  // default_pad() when unset
  std::size_t pages = 16;     // virtual pages [0, pages) are mapped
  std::vector<IrqId> irqs;
  std::vector<Device> devices;
  Program program;
  std::optional<std::uint64_t> secret;  // SECRET_LOAD operand
  // Optional same-domain process run during the pad instead of busy-waiting.
  // It is preempted once the clock reaches deadline - filler_margin.
  Program filler;
  Cycles filler_margin = 0;

  friend bool operator==(const DomainConfig&, const DomainConfig&) = default;
};

struct MachineConfig {
  HardwareConfig hw;
  Protections protections;
  std::vector<DomainConfig> domains;

  // Throws Error(kValidation) on inconsistent configuration.
  void validate() const;
  Cycles pad_of(DomainId d) const;
};

// Owner recorded for frames reserved for the shared kernel.
inline constexpr DomainId kKernelOwner = std::numeric_limits<DomainId>::max();

// Free frames grouped by colour. Hands out the lowest free frame of the
// lowest-numbered permitted colour that still has one.
class FrameAllocator {
 public:
  FrameAllocator(std::uint64_t frames, const CacheGeometry& llc);

  // Throws Error(kColourExhausted) if none of `colours` has a free frame.
  Frame alloc(DomainId owner, std::span<const Colour> colours);

  std::size_t free_count(Colour colour) const;
  const std::vector<std::pair<Frame, DomainId>>& log() const { return log_; }
  const CacheGeometry& geometry() const { return llc_; }

 private:
  CacheGeometry llc_;
  std::vector<std::deque<std::uint64_t>> free_;
  std::vector<std::pair<Frame, DomainId>> log_;
};

std::pair<Frame, FrameAllocator> alloc_frame(FrameAllocator a, DomainId owner,
                                             std::span<const Colour> colours);

enum class EventKind {
  kRetired,
  kObserve,
  kIrqDelivered,
  kSwitchBegin,
  kSwitchEnd,
  kSyscallEnter,
  kSyscallExit,
};

const char* event_kind_name(EventKind k);

// `value` is the latency for kRetired, the irq id for kIrqDelivered and the
// unpadded switch work for kSwitchEnd. `label` is set for kObserve.
struct Event {
  Cycles time = 0;
  DomainId domain = 0;
  EventKind kind = EventKind::kRetired;
  Cycles value = 0;
  std::string label;
  friend bool operator==(const Event&, const Event&) = default;
};

using Trace = std::vector<Event>;

struct Domain {
  DomainId id = 0;
  DomainConfig config;
  Cycles pad = 0;
  std::vector<Frame> pages;          // page table, indexed by vpn
  std::vector<Frame> kernel_image;   // kernel text used on this domain's traps
  std::size_t pc = 0;
  bool halted = false;
  std::size_t filler_pc = 0;
};

// Kernel memory layout. Handler `n` occupies kHandlerLines text lines
// starting at line n * kHandlerLines of the image's text frame.
inline constexpr std::uint32_t kHandlerLines = 4;
inline constexpr std::uint32_t kIrqHandlerSlot = kSyscallCount;
inline constexpr std::uint32_t kGlobalDataLines = 4;
// Global kernel data sits in the last lines of its frame.
inline constexpr std::uint32_t kGlobalDataFirstLine = 60;

class Machine {
 public:
  // Allocates frames, clones kernel images when enabled, and boots with
  // domain 0 current at time 0. Throws on invalid configuration.
  explicit Machine(MachineConfig config);

  // True when every domain has halted.
  bool finished() const;

  // Executes one action: a timer-driven or halt-driven domain switch, an
  // interrupt delivery, a filler instruction, or one instruction of the
  // current domain. Returns the events it emitted (valid until the next
  // call). Throws Error(kPadOverrun) when switch work misses the padded
  // deadline.
  std::span<const Event> step();

  // Throws Error(kUnknownIrq) if no domain owns `irq`.
  void irq_schedule(IrqId irq, Cycles fire);

  // Gives `d` a fresh private kernel text image from its colours.
  void kernel_clone(DomainId d);

  Cycles now() const { return clock_.now(); }
  DomainId current() const { return current_; }
  Cycles slice_start() const { return slice_start_; }
  const Trace& trace() const { return trace_; }
  Trace take_trace() { return std::move(trace_); }
  const MicroArchState& march() const { return march_; }
  const std::vector<Domain>& domains() const { return domains_; }
  const FrameAllocator& allocator() const { return allocator_; }
  const MachineConfig& config() const { return config_; }
  Frame shared_text() const { return shared_text_; }
  Frame global_data() const { return global_data_; }

  PhysAddr translate(DomainId d, VirtAddr v) const;
  // Sorted LLC sets reachable through d's user pages and kernel image.
  std::vector<std::uint32_t> llc_sets_of_domain(DomainId d) const;
  std::vector<Colour> effective_colours(DomainId d) const;

 private:
  struct PendingIrq {
    IrqId irq;
    Cycles fire;
    std::uint64_t seq;
  };

  DomainId owner_of(IrqId irq) const;
  HitLevel data_access(PhysAddr addr, AccessKind kind);
  HitLevel fetch(PhysAddr addr);
  Cycles touch_global_data();
  Cycles kernel_path(std::uint32_t slot);
  void emit(DomainId d, EventKind kind, Cycles value = 0, std::string label = {});
  std::optional<std::size_t> deliverable_irq() const;
  void deliver_irq(std::size_t index);
  void execute(Domain& d, const Instruction& ins, bool filler);
  void domain_switch();

  MachineConfig config_;
  FrameAllocator allocator_;
  MicroArchState march_;
  Clock clock_;
  std::vector<Domain> domains_;
  Frame shared_text_;
  Frame global_data_;
  DomainId current_ = 0;
  Cycles slice_start_ = 0;
  bool in_filler_ = false;
  std::vector<PendingIrq> pending_;
  std::uint64_t irq_seq_ = 0;
  Trace trace_;
};

}  // namespace timeprot

#endif  // TIMEPROT_KERNEL_H_
