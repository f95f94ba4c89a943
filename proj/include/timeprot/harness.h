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

// Scenario execution and the noninterference / leakage measurements built on
// it. A run is a pure function of (scenario, secret).

#ifndef TIMEPROT_HARNESS_H_
#define TIMEPROT_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "timeprot/kernel.h"
#include "timeprot/workloads.h"

namespace timeprot {

struct ProbeDecoder {
  DecodeConfig cfg;
  Cycles threshold = 0;
};

// Profiled attack: the attacker replays the system with known secrets and
// inverts the resulting symbol -> secret table.
struct TemplateDecoder {
  std::string symbol;
};

using Decoder = std::variant<ProbeDecoder, TemplateDecoder>;

struct Scenario {
  std::string name;
  MachineConfig machine;
  DomainId hi = 0;
  DomainId lo = 1;
  unsigned secret_width = 8;
  std::vector<std::uint64_t> secrets;  // empty: all 2^width values
  std::size_t trials = 1;
  std::size_t step_budget = 5'000'000;
  std::string symbol = "view_hash";
  Decoder decoder = TemplateDecoder{"view_hash"};
  // Installs the secret-dependent programs. When unset, Hi's configured
  // program runs with the secret bound for SECRET_LOAD.
  std::function<void(MachineConfig&, const Secret&)> instantiate;

  // Throws Error(kValidation) on bad roles or secret settings.
  void validate() const;
  std::vector<Secret> secret_set() const;
};

// Machine configuration for one secret.
MachineConfig instantiate(const Scenario& s, const Secret& secret);

// Runs to completion (every domain halted). Throws Error(kConfig) when the
// step budget runs out; other errors propagate with scenario context.
Trace run(const Scenario& s, const Secret& secret);

struct LoEvent {
  Cycles time = 0;
  EventKind kind = EventKind::kRetired;
  Cycles value = 0;
  std::string label;
  friend bool operator==(const LoEvent&, const LoEvent&) = default;
};

// Lo's retired instructions, observations and interrupt deliveries, in
// order, with absolute timestamps.
using LoView = std::vector<LoEvent>;

LoView lo_view(const Trace& t, DomainId lo);

struct Divergence {
  std::uint64_t secret_a = 0;
  std::uint64_t secret_b = 0;
  std::size_t index = 0;            // first differing position in the views
  std::optional<LoEvent> event_a;   // nullopt: view ended
  std::optional<LoEvent> event_b;
};

struct NiVerdict {
  bool pass = true;
  std::optional<Divergence> divergence;
};

// PASS iff every secret yields an identical LoView. Throws Error(kConfig)
// if fewer than two secrets are given.
NiVerdict check_ni(const Scenario& s, std::span<const Secret> secrets);

using SymbolFn = std::function<std::string(const LoView&)>;

// "decoded", "first_observe" or "view_hash". Throws Error(kConfig) for any
// other name.
SymbolFn symbol_extractor(const Scenario& s, std::string_view name);

// Observed latency per probed set: the time from the previous OBSERVE to each
// OBSERVE "probe <n>", maximised over repeats of n.
ProbeResult probe_result(const LoView& view);

// Timestamp of Lo's first OBSERVE, or -1 if there is none.
std::int64_t first_observe(const LoView& view);

std::string view_hash(const LoView& view);

struct ChannelMatrix {
  std::vector<std::uint64_t> inputs;   // row labels (secrets)
  std::vector<std::string> outputs;    // column labels, integers numerically first
  Eigen::MatrixXd p;                   // rows sum to 1
};

ChannelMatrix channel_matrix(const Scenario& s, std::span<const Secret> secrets,
                             const SymbolFn& symbol);

// I(X;Y) in bits for a uniform input distribution.
double mutual_information(const Eigen::MatrixXd& p);
inline double mutual_information(const ChannelMatrix& m) {
  return mutual_information(m.p);
}

struct AttackOutcome {
  std::uint64_t secret = 0;
  std::uint64_t recovered = 0;
};

struct AttackReport {
  std::vector<AttackOutcome> outcomes;
  double accuracy() const;
};

AttackReport attack_demo(const Scenario& s, std::span<const Secret> secrets);

// Evaluates fn(0..n-1) on worker threads; results are in index order and the
// lowest-index exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace timeprot

#endif  // TIMEPROT_HARNESS_H_
