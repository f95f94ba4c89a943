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

// Scenario files: INI documents with [hardware], [protections],
// [experiment] and one [domain:<name>] section per domain, in schedule order.
// See scenarios/README.md for the key reference.

#ifndef TIMEPROT_SCENARIO_FILE_H_
#define TIMEPROT_SCENARIO_FILE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "timeprot/harness.h"

namespace timeprot {

// Which program generator supplies the Hi and Lo programs.
struct GeneratorSpec {
  std::string kind = "none";  // none, prime_probe, flush_latency, kernel_text,
                              // interrupt, downgrader
  std::string level = "llc";  // prime_probe target: llc or l1d
  std::uint32_t sets_per_bit = 1;
  std::uint32_t base_set = 16;
  std::optional<Cycles> threshold;
  Cycles wait_chunk = 50;
  IrqId irq = 1;
  std::uint32_t io_syscall = 0;
  Cycles stride = 20;
  Cycles observer_chunk = 20;
  std::size_t observer_samples = 300;
  std::optional<Cycles> io_latency;
  std::optional<Cycles> downgrader_pad;
};

enum class Mode { kRun, kCheckNi, kCapacity, kAttackDemo };

std::optional<Mode> parse_mode(std::string_view s);
const char* mode_name(Mode m);

struct ScenarioFile {
  Scenario scenario;
  GeneratorSpec generator;
  Mode mode = Mode::kCheckNi;
  std::filesystem::path source;

  // Turns off one protection and re-validates.
  void disable_mechanism(Mechanism m);

  // Every resolved setting, with sorted keys. Programs appear as text.
  nlohmann::json canonical() const;
  // SHA-256 of canonical().dump().
  std::string config_hash() const;
};

// Throws Error(kParse) for syntax problems and unknown keys, and
// Error(kValidation) for semantically invalid settings.
ScenarioFile parse_scenario(const std::filesystem::path& path);
ScenarioFile parse_scenario_text(std::string_view text,
                                 const std::filesystem::path& base_dir,
                                 std::string name = "scenario");

// Binds `g` to the scenario. Also sets the decoder and default symbol.
void apply_generator(Scenario& s, const GeneratorSpec& g);

}  // namespace timeprot

#endif  // TIMEPROT_SCENARIO_FILE_H_
