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

#include "timeprot/program.h"

#include <charconv>
#include <sstream>

namespace timeprot {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::kParse, "line " + std::to_string(line) + ": " + msg,
              line);
}

std::uint64_t parse_number(std::string_view tok, int line) {
  int base = 10;
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    tok.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty()) {
    fail(line, "bad numeric operand '" + std::string(tok) + "'");
  }
  return v;
}

void expect_operands(const std::vector<std::string_view>& toks, std::size_t n,
                     int line) {
  if (toks.size() != n + 1) {
    fail(line, std::string(toks[0]) + " takes " + std::to_string(n) +
                   " operand(s)");
  }
}

}  // namespace

Program assemble(std::string_view text) {
  Program program;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto toks = split_ws(line);
    const std::string_view op = toks[0];

    if (op == "LOAD") {
      expect_operands(toks, 1, line_no);
      program.push_back(Instruction::load(VirtAddr{parse_number(toks[1], line_no)}));
    } else if (op == "STORE") {
      expect_operands(toks, 1, line_no);
      program.push_back(Instruction::store(VirtAddr{parse_number(toks[1], line_no)}));
    } else if (op == "COMPUTE") {
      expect_operands(toks, 1, line_no);
      program.push_back(Instruction::compute(parse_number(toks[1], line_no)));
    } else if (op == "OBSERVE") {
      // The label is the rest of the line.
      if (toks.size() < 2) fail(line_no, "OBSERVE needs a label");
      program.push_back(Instruction::observe(std::string(trim(line.substr(op.size())))));
    } else if (op == "SECRET_LOAD") {
      expect_operands(toks, 2, line_no);
      program.push_back(Instruction::secret_load(
          VirtAddr{parse_number(toks[1], line_no)}, parse_number(toks[2], line_no)));
    } else if (op == "SYSCALL") {
      if (toks.size() > 2) fail(line_no, "SYSCALL takes at most one operand");
      const std::uint64_t n = toks.size() == 2 ? parse_number(toks[1], line_no) : 0;
      if (n >= kSyscallCount) {
        fail(line_no, "syscall number must be below " + std::to_string(kSyscallCount));
      }
      program.push_back(Instruction::syscall(static_cast<std::uint32_t>(n)));
    } else if (op == "HALT") {
      expect_operands(toks, 0, line_no);
      program.push_back(Instruction::halt());
    } else {
      fail(line_no, "unknown mnemonic '" + std::string(op) + "'");
    }
  }
  return program;
}

std::string disassemble(const Program& program) {
  std::ostringstream out;
  for (const Instruction& i : program) {
    switch (i.op) {
      case Opcode::kLoad: out << "LOAD 0x" << std::hex << i.a << std::dec; break;
      case Opcode::kStore: out << "STORE 0x" << std::hex << i.a << std::dec; break;
      case Opcode::kCompute: out << "COMPUTE " << i.a; break;
      case Opcode::kObserve: out << "OBSERVE " << i.label; break;
      case Opcode::kSecretLoad:
        out << "SECRET_LOAD 0x" << std::hex << i.a << std::dec << ' ' << i.b;
        break;
      case Opcode::kSyscall: out << "SYSCALL " << i.a; break;
      case Opcode::kHalt: out << "HALT"; break;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace timeprot
