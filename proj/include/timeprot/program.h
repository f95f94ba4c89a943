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

// A tiny deterministic instruction set for domain programs, and its text
// form: one instruction per line, '#' starts a comment, numbers in decimal
// or 0x-prefixed hex.
//
//   LOAD <vaddr>            STORE <vaddr>
//   COMPUTE <cycles>        OBSERVE <label>
//   SECRET_LOAD <base> <stride>
//   SYSCALL [<number>]      HALT

#ifndef TIMEPROT_PROGRAM_H_
#define TIMEPROT_PROGRAM_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "timeprot/types.h"

namespace timeprot {

// Kernel handler slots. Each syscall number selects its own handler text.
inline constexpr std::uint32_t kSyscallCount = 12;

enum class Opcode {
  kLoad,
  kStore,
  kCompute,
  kObserve,
  kSecretLoad,
  kSyscall,
  kHalt,
};

struct Instruction {
  Opcode op = Opcode::kHalt;
  std::uint64_t a = 0;  // vaddr, cycles, base, or syscall number
  std::uint64_t b = 0;  // stride for SECRET_LOAD
  std::string label;    // OBSERVE only

  static Instruction load(VirtAddr v) { return {Opcode::kLoad, v.value, 0, {}}; }
  static Instruction store(VirtAddr v) { return {Opcode::kStore, v.value, 0, {}}; }
  static Instruction compute(Cycles n) { return {Opcode::kCompute, n, 0, {}}; }
  static Instruction observe(std::string label) {
    return {Opcode::kObserve, 0, 0, std::move(label)};
  }
  static Instruction secret_load(VirtAddr base, std::uint64_t stride) {
    return {Opcode::kSecretLoad, base.value, stride, {}};
  }
  static Instruction syscall(std::uint32_t number = 0) {
    return {Opcode::kSyscall, number, 0, {}};
  }
  static Instruction halt() { return {Opcode::kHalt, 0, 0, {}}; }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

using Program = std::vector<Instruction>;

// Throws Error(kParse) carrying the offending line number.
Program assemble(std::string_view text);

// Inverse of assemble (canonical text, hex addresses).
std::string disassemble(const Program& program);

}  // namespace timeprot

#endif  // TIMEPROT_PROGRAM_H_
