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

#include "timeprot/cli.h"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <boost/program_options.hpp>
#include <nlohmann/json.hpp>

#include "timeprot/scenario_file.h"

#ifndef TIMEPROT_SCENARIO_DIR
#define TIMEPROT_SCENARIO_DIR "scenarios"
#endif

namespace timeprot {
namespace {

namespace po = boost::program_options;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

constexpr const char* kUsage =
    "usage: timeprot <command> <scenario> [options]\n"
    "       timeprot <scenario> [options]   (runs the file's experiment mode)\n"
    "commands: run, check-ni, capacity, attack-demo\n"
    "attack-demo may omit <scenario>; it then picks the scenario designated\n"
    "for the first --off mechanism.\n";

struct Options {
  std::string command;
  std::string scenario;
  std::vector<std::string> off;
  std::optional<std::string> trace;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> secrets;
  std::optional<std::string> symbol;
  std::filesystem::path scenario_dir = default_scenario_dir();
};

json record(const char* kind, json detail) {
  return json{{"time", nullptr}, {"domain", nullptr}, {"kind", kind},
              {"detail", std::move(detail)}};
}

json trace_record(const Event& e) {
  json detail{{"value", e.value}};
  if (!e.label.empty()) detail["label"] = e.label;
  return json{{"time", e.time}, {"domain", e.domain}, {"kind", event_kind_name(e.kind)},
              {"detail", std::move(detail)}};
}

void write_trace(std::ostream& os, const Trace& t) {
  for (const Event& e : t) os << trace_record(e).dump() << '\n';
}

json lo_event_json(const std::optional<LoEvent>& e) {
  if (!e) return nullptr;
  json j{{"time", e->time}, {"kind", event_kind_name(e->kind)}, {"value", e->value}};
  if (!e->label.empty()) j["label"] = e->label;
  return j;
}

std::filesystem::path resolve_scenario(const Options& o) {
  const std::filesystem::path direct(o.scenario);
  if (std::filesystem::is_regular_file(direct)) return direct;
  const std::filesystem::path named = o.scenario_dir / (o.scenario + ".ini");
  if (std::filesystem::is_regular_file(named)) return named;
  throw Error(ErrorCode::kValidation, "no scenario file '" + o.scenario + "'");
}

std::vector<Secret> secrets_for(const ScenarioFile& f, const Options& o) {
  if (o.secrets.empty()) return f.scenario.secret_set();
  std::vector<Secret> out;
  for (std::uint64_t v : o.secrets) {
    Secret s{v, f.scenario.secret_width};
    s.validate();
    out.push_back(s);
  }
  return out;
}

json common_fields(const Options& o, const ScenarioFile& f) {
  json off = json::array();
  for (const std::string& m : o.off) off.push_back(mechanism_name(*parse_mechanism(m)));
  return json{{"command", o.command},
              {"scenario", f.scenario.name},
              {"config_hash", f.config_hash()},
              {"off", off}};
}

int cmd_run(const Options& o, const ScenarioFile& f, std::ostream& out) {
  const std::vector<Secret> secrets = secrets_for(f, o);
  const Secret secret = secrets.front();
  const Trace t = run(f.scenario, secret);
  if (o.trace) {
    std::ofstream file(*o.trace);
    if (!file) throw Error(ErrorCode::kConfig, "cannot write '" + *o.trace + "'");
    write_trace(file, t);
  } else {
    write_trace(out, t);
  }
  json detail = common_fields(o, f);
  detail["secret"] = secret.value;
  detail["events"] = t.size();
  detail["end_time"] = t.empty() ? 0 : t.back().time;
  out << record("report", detail).dump() << '\n';
  return kExitOk;
}

int cmd_check_ni(const Options& o, const ScenarioFile& f, std::ostream& out) {
  const std::vector<Secret> secrets = secrets_for(f, o);
  const NiVerdict v = check_ni(f.scenario, secrets);
  json detail = common_fields(o, f);
  detail["verdict"] = v.pass ? "PASS" : "FAIL";
  detail["secrets"] = secrets.size();
  if (v.divergence) {
    const Divergence& d = *v.divergence;
    detail["divergence"] = {{"secret_a", d.secret_a},
                            {"secret_b", d.secret_b},
                            {"index", d.index},
                            {"event_a", lo_event_json(d.event_a)},
                            {"event_b", lo_event_json(d.event_b)}};
    if (o.trace) {
      // Both witnesses, one after the other.
      std::ofstream file(*o.trace);
      if (!file) throw Error(ErrorCode::kConfig, "cannot write '" + *o.trace + "'");
      write_trace(file, run(f.scenario, Secret{d.secret_a, f.scenario.secret_width}));
      write_trace(file, run(f.scenario, Secret{d.secret_b, f.scenario.secret_width}));
    }
  }
  out << record("report", detail).dump() << '\n';
  return v.pass ? kExitOk : kExitFail;
}

int cmd_capacity(const Options& o, const ScenarioFile& f, std::ostream& out) {
  const std::vector<Secret> secrets = secrets_for(f, o);
  const std::string symbol = o.symbol.value_or(f.scenario.symbol);
  const ChannelMatrix m = channel_matrix(f.scenario, secrets, symbol_extractor(f.scenario, symbol));
  json detail = common_fields(o, f);
  detail["symbol"] = symbol;
  detail["inputs"] = m.inputs.size();
  detail["outputs"] = m.outputs.size();
  detail["mi_bits"] = mutual_information(m);
  out << record("report", detail).dump() << '\n';
  return kExitOk;
}

int cmd_attack_demo(const Options& o, const ScenarioFile& f, std::ostream& out) {
  // Profiling covers the whole secret space; --secret only selects what is
  // printed.
  const std::vector<Secret> secrets = f.scenario.secret_set();
  const AttackReport r = attack_demo(f.scenario, secrets);
  bool all = true;
  std::size_t shown = 0;
  for (const AttackOutcome& a : r.outcomes) {
    if (!o.secrets.empty() &&
        std::find(o.secrets.begin(), o.secrets.end(), a.secret) == o.secrets.end()) {
      continue;
    }
    ++shown;
    all = all && a.secret == a.recovered;
    out << record("attack", {{"secret", a.secret},
                             {"recovered", a.recovered},
                             {"match", a.secret == a.recovered}})
               .dump()
        << '\n';
  }
  if (shown == 0) throw Error(ErrorCode::kValidation, "--secret is outside the secret set");
  json detail = common_fields(o, f);
  detail["accuracy"] = r.accuracy();
  detail["secrets"] = secrets.size();
  detail["recovered_all"] = all;
  out << record("report", detail).dump() << '\n';
  return all ? kExitOk : kExitFail;
}

Options parse_options(const std::vector<std::string>& args) {
  Options o;
  std::vector<std::string> positional;
  std::string scenario_dir;
  po::options_description desc("options");
  desc.add_options()
      ("help,h", "show usage")
      ("off", po::value<std::vector<std::string>>(&o.off),
       "disable a protection: flush, colour, clone, pad, irq (repeatable)")
      ("trace", po::value<std::string>(), "write trace records to this path")
      ("seed", po::value<std::uint64_t>(), "reserved; the simulator is deterministic")
      ("secret", po::value<std::vector<std::uint64_t>>(&o.secrets),
       "secret value (repeatable)")
      ("symbol", po::value<std::string>(), "decoded, first_observe or view_hash")
      ("scenario-dir", po::value<std::string>(&scenario_dir), "where scenario names resolve")
      ("positional", po::value<std::vector<std::string>>(&positional));
  po::positional_options_description pos;
  pos.add("positional", -1);
  po::variables_map vm;
  try {
    po::store(po::command_line_parser(args).options(desc).positional(pos).run(), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (vm.count("help")) {
    o.command = "help";
    return o;
  }
  if (vm.count("trace")) o.trace = vm["trace"].as<std::string>();
  if (vm.count("seed")) o.seed = vm["seed"].as<std::uint64_t>();
  if (vm.count("symbol")) o.symbol = vm["symbol"].as<std::string>();
  if (!scenario_dir.empty()) o.scenario_dir = scenario_dir;
  for (const std::string& m : o.off) {
    if (!parse_mechanism(m)) throw Error(ErrorCode::kConfig, "unknown mechanism '" + m + "'");
  }
  if (positional.empty()) throw Error(ErrorCode::kConfig, "missing command");
  if (positional.size() > 2) throw Error(ErrorCode::kConfig, "too many arguments");
  if (parse_mode(positional[0])) {
    o.command = positional[0];
    if (positional.size() == 2) {
      o.scenario = positional[1];
    } else if (o.command == "attack-demo") {
      o.scenario = o.off.empty() ? "prime_probe_llc"
                                 : designated_scenario(*parse_mechanism(o.off.front()));
    } else {
      throw Error(ErrorCode::kConfig, "missing scenario");
    }
  } else {
    if (positional.size() != 1) throw Error(ErrorCode::kConfig, "unknown command");
    o.scenario = positional[0];
  }
  return o;
}

}  // namespace

std::filesystem::path default_scenario_dir() { return TIMEPROT_SCENARIO_DIR; }

std::string designated_scenario(Mechanism m) {
  switch (m) {
    case Mechanism::kFlush: return "prime_probe_l1";
    case Mechanism::kColour: return "prime_probe_llc";
    case Mechanism::kClone: return "kernel_text";
    case Mechanism::kPad: return "flush_latency";
    case Mechanism::kIrq: return "interrupt";
  }
  return {};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  try {
    Options o = parse_options(args);
    if (o.command == "help") {
      out << kUsage;
      return kExitOk;
    }
    ScenarioFile f = parse_scenario(resolve_scenario(o));
    for (const std::string& m : o.off) f.disable_mechanism(*parse_mechanism(m));
    if (o.command.empty()) o.command = mode_name(f.mode);
    if (o.symbol) symbol_extractor(f.scenario, *o.symbol);

    int status = kExitOk;
    switch (*parse_mode(o.command)) {
      case Mode::kRun: status = cmd_run(o, f, out); break;
      case Mode::kCheckNi: status = cmd_check_ni(o, f, out); break;
      case Mode::kCapacity: status = cmd_capacity(o, f, out); break;
      case Mode::kAttackDemo: status = cmd_attack_demo(o, f, out); break;
    }
    const auto elapsed = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - started);
    out << record("meta", {{"version", kVersion}, {"wall_time_ms", elapsed.count()}}).dump()
        << '\n';
    return status;
  } catch (const Error& e) {
    err << "timeprot: " << ErrorCodeName(e.code()) << ": " << e.what() << '\n';
    if (e.code() == ErrorCode::kConfig && std::string_view(e.what()).starts_with("missing")) {
      err << kUsage;
    }
    return kExitError;
  } catch (const std::exception& e) {
    err << "timeprot: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace timeprot
