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

#include "timeprot/harness.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "timeprot/digest.h"

namespace timeprot {

void Scenario::validate() const {
  const std::size_t n = machine.domains.size();
  if (hi >= n || lo >= n || hi == lo) {
    throw Error(ErrorCode::kValidation,
                "scenario needs distinct Hi and Lo domains");
  }
  if (secret_width >= 32) {
    throw Error(ErrorCode::kValidation, "secret width must be below 32 bits");
  }
  if (trials == 0) throw Error(ErrorCode::kValidation, "trials must be positive");
  for (std::uint64_t v : secrets) {
    if (v >= (std::uint64_t{1} << secret_width)) {
      throw Error(ErrorCode::kValidation, "secret " + std::to_string(v) +
                                              " exceeds the secret width");
    }
  }
}

std::vector<Secret> Scenario::secret_set() const {
  if (secrets.empty()) return all_secrets(secret_width);
  std::vector<Secret> out;
  for (std::uint64_t v : secrets) out.push_back(Secret{v, secret_width});
  return out;
}

MachineConfig instantiate(const Scenario& s, const Secret& secret) {
  secret.validate();
  MachineConfig cfg = s.machine;
  if (s.instantiate) {
    s.instantiate(cfg, secret);
  } else {
    cfg.domains.at(s.hi).secret = secret.value;
  }
  return cfg;
}

Trace run(const Scenario& s, const Secret& secret) {
  try {
    Machine m(instantiate(s, secret));
    std::size_t steps = 0;
    while (!m.finished()) {
      if (++steps > s.step_budget) {
        throw Error(ErrorCode::kConfig,
                    "step budget of " + std::to_string(s.step_budget) + " exhausted");
      }
      m.step();
    }
    return m.take_trace();
  } catch (const Error& e) {
    throw Error(e.code(),
                "scenario '" + s.name + "', secret " + std::to_string(secret.value) +
                    ": " + e.what(),
                e.line());
  }
}

LoView lo_view(const Trace& t, DomainId lo) {
  LoView view;
  for (const Event& e : t) {
    if (e.domain != lo) continue;
    if (e.kind == EventKind::kRetired || e.kind == EventKind::kObserve ||
        e.kind == EventKind::kIrqDelivered) {
      view.push_back(LoEvent{e.time, e.kind, e.value, e.label});
    }
  }
  return view;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

std::vector<LoView> views_for(const Scenario& s, std::span<const Secret> secrets) {
  std::vector<LoView> views(secrets.size());
  parallel_for(secrets.size(),
               [&](std::size_t i) { views[i] = lo_view(run(s, secrets[i]), s.lo); });
  return views;
}

std::optional<std::int64_t> as_integer(const std::string& s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Integers in numeric order, then everything else lexicographically.
bool symbol_less(const std::string& a, const std::string& b) {
  const auto x = as_integer(a);
  const auto y = as_integer(b);
  if (x && y) return *x < *y;
  if (x || y) return x.has_value();
  return a < b;
}

}  // namespace

NiVerdict check_ni(const Scenario& s, std::span<const Secret> secrets) {
  if (secrets.size() < 2) {
    throw Error(ErrorCode::kConfig, "noninterference needs at least two secrets");
  }
  s.validate();
  const std::vector<LoView> views = views_for(s, secrets);
  // Equality is transitive, so comparing against the first view suffices.
  NiVerdict verdict;
  const LoView& ref = views.front();
  for (std::size_t j = 1; j < views.size(); ++j) {
    const LoView& other = views[j];
    if (other == ref) continue;
    const auto [a, b] = std::mismatch(ref.begin(), ref.end(), other.begin(), other.end());
    const std::size_t index = static_cast<std::size_t>(a - ref.begin());
    if (verdict.divergence && verdict.divergence->index <= index) continue;
    Divergence d;
    d.secret_a = secrets.front().value;
    d.secret_b = secrets[j].value;
    d.index = index;
    if (a != ref.end()) d.event_a = *a;
    if (b != other.end()) d.event_b = *b;
    verdict.pass = false;
    verdict.divergence = d;
  }
  return verdict;
}

ProbeResult probe_result(const LoView& view) {
  ProbeResult r;
  std::optional<Cycles> last;
  for (const LoEvent& e : view) {
    if (e.kind != EventKind::kObserve) continue;
    if (e.label.rfind("probe ", 0) == 0 && last) {
      const auto set = static_cast<std::uint32_t>(std::stoul(e.label.substr(6)));
      Cycles& slot = r[set];
      slot = std::max(slot, e.time - *last);
    }
    last = e.time;
  }
  return r;
}

std::int64_t first_observe(const LoView& view) {
  for (const LoEvent& e : view) {
    if (e.kind == EventKind::kObserve) return static_cast<std::int64_t>(e.time);
  }
  return -1;
}

std::string view_hash(const LoView& view) {
  std::ostringstream out;
  for (const LoEvent& e : view) {
    out << e.time << ' ' << event_kind_name(e.kind) << ' ' << e.value << ' '
        << e.label << '\n';
  }
  return sha256_hex(out.str());
}

SymbolFn symbol_extractor(const Scenario& s, std::string_view name) {
  if (name == "first_observe") {
    return [](const LoView& v) { return std::to_string(first_observe(v)); };
  }
  if (name == "view_hash") {
    return [](const LoView& v) { return view_hash(v); };
  }
  if (name == "decoded") {
    if (const auto* probe = std::get_if<ProbeDecoder>(&s.decoder)) {
      const ProbeDecoder d = *probe;
      return [d](const LoView& v) {
        return std::to_string(decode_probe(probe_result(v), d.cfg, d.threshold).value);
      };
    }
    // A template decoder's output is a relabelling of its symbol.
    return symbol_extractor(s, std::get<TemplateDecoder>(s.decoder).symbol);
  }
  throw Error(ErrorCode::kConfig, "unknown symbol extractor '" + std::string(name) + "'");
}

ChannelMatrix channel_matrix(const Scenario& s, std::span<const Secret> secrets,
                             const SymbolFn& symbol) {
  s.validate();
  const std::size_t trials = s.trials;
  std::vector<std::string> symbols(secrets.size() * trials);
  parallel_for(symbols.size(), [&](std::size_t i) {
    symbols[i] = symbol(lo_view(run(s, secrets[i / trials]), s.lo));
  });

  ChannelMatrix m;
  m.outputs = symbols;
  std::sort(m.outputs.begin(), m.outputs.end(), symbol_less);
  m.outputs.erase(std::unique(m.outputs.begin(), m.outputs.end()), m.outputs.end());
  std::map<std::string, Eigen::Index> column;
  for (std::size_t c = 0; c < m.outputs.size(); ++c) {
    column[m.outputs[c]] = static_cast<Eigen::Index>(c);
  }
  m.p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(secrets.size()),
                              static_cast<Eigen::Index>(m.outputs.size()));
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    m.p(static_cast<Eigen::Index>(i / trials), column[symbols[i]]) +=
        1.0 / static_cast<double>(trials);
  }
  for (const Secret& sec : secrets) m.inputs.push_back(sec.value);
  return m;
}

namespace {

double entropy_bits(const Eigen::Ref<const Eigen::VectorXd>& dist) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) h -= dist[i] * std::log2(dist[i]);
  }
  return h;
}

}  // namespace

double mutual_information(const Eigen::MatrixXd& p) {
  if (p.rows() == 0) return 0.0;
  const Eigen::VectorXd output = p.colwise().mean().transpose();
  double conditional = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    conditional += entropy_bits(p.row(r).transpose());
  }
  conditional /= static_cast<double>(p.rows());
  // Clamp rounding noise; the true value is never negative.
  return std::max(0.0, entropy_bits(output) - conditional);
}

double AttackReport::accuracy() const {
  if (outcomes.empty()) return 0.0;
  const auto correct = std::count_if(outcomes.begin(), outcomes.end(),
                                     [](const AttackOutcome& o) {
                                       return o.secret == o.recovered;
                                     });
  return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

AttackReport attack_demo(const Scenario& s, std::span<const Secret> secrets) {
  s.validate();
  const std::vector<LoView> views = views_for(s, secrets);
  AttackReport report;
  if (const auto* probe = std::get_if<ProbeDecoder>(&s.decoder)) {
    for (std::size_t i = 0; i < secrets.size(); ++i) {
      const Secret got = decode_probe(probe_result(views[i]), probe->cfg, probe->threshold);
      report.outcomes.push_back({secrets[i].value, got.value});
    }
    return report;
  }
  // The simulator is deterministic, so the profiling runs on the attacker's
  // replica coincide with the attack runs. A symbol seen for several secrets
  // decodes to the first of them.
  const SymbolFn symbol =
      symbol_extractor(s, std::get<TemplateDecoder>(s.decoder).symbol);
  std::vector<std::string> symbols;
  std::map<std::string, std::uint64_t> profile;
  for (std::size_t i = 0; i < secrets.size(); ++i) {
    symbols.push_back(symbol(views[i]));
    profile.emplace(symbols.back(), secrets[i].value);
  }
  for (std::size_t i = 0; i < secrets.size(); ++i) {
    report.outcomes.push_back({secrets[i].value, profile.at(symbols[i])});
  }
  return report;
}

}  // namespace timeprot
