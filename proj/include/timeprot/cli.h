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

// Command-line front end. Output is JSON lines: every record has the fields
// time, domain, kind and detail. Exit status: 0 success or PASS, 1 FAIL,
// 2 usage, parse, validation or runtime error.

#ifndef TIMEPROT_CLI_H_
#define TIMEPROT_CLI_H_

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "timeprot/kernel.h"

namespace timeprot {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitError = 2;

// Directory searched for scenario names given without a path.
std::filesystem::path default_scenario_dir();

// The shipped scenario that disabling `m` is expected to break.
std::string designated_scenario(Mechanism m);

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace timeprot

#endif  // TIMEPROT_CLI_H_
