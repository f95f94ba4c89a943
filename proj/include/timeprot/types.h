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

#ifndef TIMEPROT_TYPES_H_
#define TIMEPROT_TYPES_H_

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace timeprot {

// Virtual time. 64 bits of cycles is far beyond any simulated run.
using Cycles = std::uint64_t;

using DomainId = std::uint32_t;
using IrqId = std::uint32_t;
using Colour = std::uint32_t;

struct PhysAddr {
  std::uint64_t value = 0;
  friend auto operator<=>(const PhysAddr&, const PhysAddr&) = default;
};

struct VirtAddr {
  std::uint64_t value = 0;
  friend auto operator<=>(const VirtAddr&, const VirtAddr&) = default;
};

// Physical frame number (address / page_size).
struct Frame {
  std::uint64_t value = 0;
  friend auto operator<=>(const Frame&, const Frame&) = default;
};

enum class ErrorCode {
  kParse,
  kValidation,
  kConfig,
  kColourExhausted,
  kPadOverrun,
  kUnknownIrq,
  kAddressFault,
};

const char* ErrorCodeName(ErrorCode code);

// All failures surface as this exception type; `code()` distinguishes them.
// Parse errors carry the 1-based line they were detected on (0 if unknown).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int line = 0)
      : std::runtime_error(what), code_(code), line_(line) {}

  ErrorCode code() const { return code_; }
  int line() const { return line_; }

 private:
  ErrorCode code_;
  int line_;
};

}  // namespace timeprot

#endif  // TIMEPROT_TYPES_H_
