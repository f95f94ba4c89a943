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

#include "timeprot/scenario_file.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "timeprot/digest.h"

namespace timeprot {
namespace {

namespace pt = boost::property_tree;

[[noreturn]] void parse_fail(const std::string& where, const std::string& msg) {
  throw Error(ErrorCode::kParse, where + ": " + msg);
}

[[noreturn]] void invalid(const std::string& msg) {
  throw Error(ErrorCode::kValidation, msg);
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t") - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::optional<std::uint64_t> to_number(std::string_view s) {
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// One INI section. Every key must be consumed before finish().
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> text(const std::string& key) {
    used_.insert(key);
    if (!tree_) return std::nullopt;
    const auto child = tree_->get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return trim(child->data());
  }

  std::uint64_t number(const std::string& key, std::uint64_t fallback) {
    return optional_number(key).value_or(fallback);
  }

  std::optional<std::uint64_t> optional_number(const std::string& key) {
    const auto s = text(key);
    if (!s) return std::nullopt;
    const auto v = to_number(*s);
    if (!v) parse_fail(where(key), "expected a number, got '" + *s + "'");
    return v;
  }

  bool flag(const std::string& key, bool fallback) {
    const auto s = text(key);
    if (!s) return fallback;
    if (*s == "on" || *s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "off" || *s == "false" || *s == "no" || *s == "0") return false;
    parse_fail(where(key), "expected on/off, got '" + *s + "'");
  }

  // "0-7", "1,3,5", or a mix such as "0-3,8".
  std::vector<std::uint64_t> list(const std::string& key) {
    std::vector<std::uint64_t> out;
    const auto s = text(key);
    if (!s) return out;
    for (const std::string& item : split(*s, ',')) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        const auto v = to_number(item);
        if (!v) parse_fail(where(key), "bad list item '" + item + "'");
        out.push_back(*v);
        continue;
      }
      const auto lo = to_number(trim(item.substr(0, dash)));
      const auto hi = to_number(trim(item.substr(dash + 1)));
      if (!lo || !hi || *lo > *hi) parse_fail(where(key), "bad range '" + item + "'");
      for (std::uint64_t v = *lo; v <= *hi; ++v) out.push_back(v);
    }
    return out;
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.contains(key)) parse_fail(where(key), "unknown key");
    }
  }

  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid("cannot read '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Program load_program(const std::filesystem::path& base, const std::string& rel) {
  const std::filesystem::path path = base / rel;
  if (!std::filesystem::exists(path)) {
    invalid("program file '" + path.string() + "' does not exist");
  }
  try {
    return assemble(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what(), e.line());
  }
}

void read_geometry(Section& s, const std::string& prefix, CacheGeometry& g,
                   std::uint32_t line, std::uint32_t page) {
  g.sets = static_cast<std::uint32_t>(s.number(prefix + "_sets", g.sets));
  g.ways = static_cast<std::uint32_t>(s.number(prefix + "_ways", g.ways));
  g.line_size = line;
  g.page_size = page;
}

HardwareConfig read_hardware(Section& s) {
  HardwareConfig hw;
  const auto line = static_cast<std::uint32_t>(s.number("line_size", hw.llc.line_size));
  const auto page = static_cast<std::uint32_t>(s.number("page_size", hw.llc.page_size));
  read_geometry(s, "l1i", hw.l1i, line, page);
  read_geometry(s, "l1d", hw.l1d, line, page);
  read_geometry(s, "llc", hw.llc, line, page);
  read_geometry(s, "tlb", hw.tlb, page, page);
  hw.predictor_entries = s.number("predictor_entries", hw.predictor_entries);
  hw.memory_bytes = s.number("memory_bytes", hw.memory_bytes);
  TimeModelParams& p = hw.params;
  p.l1_hit = s.number("l1_hit", p.l1_hit);
  p.llc_hit = s.number("llc_hit", p.llc_hit);
  p.mem = s.number("mem", p.mem);
  p.predict_ok = s.number("predict_ok", p.predict_ok);
  p.mispredict = s.number("mispredict", p.mispredict);
  p.tlb_miss_penalty = s.number("tlb_miss_penalty", p.tlb_miss_penalty);
  p.flush_base = s.number("flush_base", p.flush_base);
  p.writeback_per_line = s.number("writeback_per_line", p.writeback_per_line);
  p.kernel_entry = s.number("kernel_entry", p.kernel_entry);
  p.kernel_exit = s.number("kernel_exit", p.kernel_exit);
  s.finish();
  try {
    hw.validate();
  } catch (const Error& e) {
    invalid(std::string("[hardware] ") + e.what());
  }
  return hw;
}

// Upper bound on a switch's own work when the outgoing domain leaves at most
// `dirty` lines dirty.
Cycles switch_work_bound(const HardwareConfig& hw, std::size_t dirty) {
  return flush_latency(hw.params, dirty) + kGlobalDataLines * hw.params.mem;
}

}  // namespace

std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "run") return Mode::kRun;
  if (s == "check-ni") return Mode::kCheckNi;
  if (s == "capacity") return Mode::kCapacity;
  if (s == "attack-demo") return Mode::kAttackDemo;
  return std::nullopt;
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kRun: return "run";
    case Mode::kCheckNi: return "check-ni";
    case Mode::kCapacity: return "capacity";
    case Mode::kAttackDemo: return "attack-demo";
  }
  return "?";
}

void apply_generator(Scenario& s, const GeneratorSpec& g) {
  const DomainId hi = s.hi;
  const DomainId lo = s.lo;
  const unsigned width = s.secret_width;
  const TimeModelParams& p = s.machine.hw.params;

  if (g.kind == "none") {
    s.instantiate = nullptr;
    s.decoder = TemplateDecoder{"view_hash"};
    return;
  }
  if (g.kind == "prime_probe") {
    if (g.level != "llc" && g.level != "l1d") {
      invalid("prime_probe level must be llc or l1d");
    }
    if (lo > hi) invalid("prime_probe needs Lo scheduled before Hi");
    const bool llc = g.level == "llc";
    const Cycles threshold = g.threshold.value_or(
        llc ? midpoint(p.llc_hit, p.mem) : midpoint(p.l1_hit, p.llc_hit));
    s.decoder = ProbeDecoder{DecodeConfig{width, g.sets_per_bit, g.base_set, false},
                             threshold};
    s.symbol = "decoded";
    s.instantiate = [=](MachineConfig& cfg, const Secret& secret) {
      PrimeProbeConfig pp;
      pp.target = llc ? cfg.hw.llc : cfg.hw.l1d;
      pp.sets_per_bit = g.sets_per_bit;
      pp.base_set = g.base_set;
      pp.wait_cycles = cfg.domains[lo].slice;
      pp.wait_chunk = g.wait_chunk;
      AttackPrograms a = gen_prime_probe(secret, pp);
      cfg.domains[hi].program = std::move(a.trojan);
      cfg.domains[lo].program = std::move(a.spy);
    };
    // Generate once so configuration errors surface at load time.
    gen_prime_probe(Secret{0, width},
                    PrimeProbeConfig{llc ? s.machine.hw.llc : s.machine.hw.l1d,
                                     g.sets_per_bit, g.base_set});
    return;
  }
  if (g.kind == "flush_latency") {
    if (hi > lo) invalid("flush_latency needs Hi scheduled before Lo");
    if ((std::uint64_t{1} << width) - 1 > s.machine.hw.l1d.lines()) {
      invalid("flush_latency secret range exceeds the L1D line count");
    }
    s.decoder = TemplateDecoder{"first_observe"};
    s.symbol = "first_observe";
    s.instantiate = [=](MachineConfig& cfg, const Secret& secret) {
      AttackPrograms a = gen_flush_latency_channel(secret, FlushLatencyConfig{cfg.hw.l1d});
      cfg.domains[hi].program = std::move(a.trojan);
      cfg.domains[lo].program = std::move(a.spy);
    };
    return;
  }
  if (g.kind == "kernel_text") {
    if (width > kSyscallCount) invalid("kernel_text carries at most 12 bits");
    const Cycles threshold = g.threshold.value_or(kernel_text_threshold(p));
    s.decoder = ProbeDecoder{DecodeConfig{width, 1, 0, true}, threshold};
    s.symbol = "decoded";
    s.instantiate = [=](MachineConfig& cfg, const Secret& secret) {
      KernelTextConfig kt;
      kt.wait_cycles = lo < hi ? cfg.domains[lo].slice : 0;
      kt.wait_chunk = g.wait_chunk;
      AttackPrograms a = gen_kernel_text(secret, kt);
      cfg.domains[hi].program = std::move(a.trojan);
      cfg.domains[lo].program = std::move(a.spy);
    };
    return;
  }
  if (g.kind == "interrupt") {
    if (hi > lo) invalid("interrupt needs Hi scheduled before Lo");
    auto& irqs = s.machine.domains[hi].irqs;
    if (std::find(irqs.begin(), irqs.end(), g.irq) == irqs.end()) irqs.push_back(g.irq);
    s.decoder = TemplateDecoder{"view_hash"};
    s.symbol = "view_hash";
    s.instantiate = [=](MachineConfig& cfg, const Secret& secret) {
      InterruptConfig ic;
      ic.io_syscall = g.io_syscall;
      ic.stride = g.stride;
      ic.observer_chunk = g.observer_chunk;
      ic.observer_samples = g.observer_samples;
      AttackPrograms a = gen_interrupt_channel(secret, ic);
      DomainConfig& h = cfg.domains[hi];
      // Completion lands in Lo's slice: after Hi's padded turn.
      const Cycles latency = g.io_latency.value_or(h.slice + cfg.pad_of(hi));
      h.devices = {Device{g.io_syscall, g.irq, latency}};
      h.program = std::move(a.trojan);
      cfg.domains[lo].program = std::move(a.spy);
    };
    return;
  }
  if (g.kind == "downgrader") {
    if (hi > lo) invalid("downgrader needs Hi scheduled before Lo");
    const Cycles worst = (Cycles{1} << width) - 1;
    const Cycles pad = g.downgrader_pad.value_or(worst);
    if (pad < worst) invalid("downgrader_pad is below the worst-case work");
    s.decoder = TemplateDecoder{"first_observe"};
    s.symbol = "first_observe";
    s.instantiate = [=](MachineConfig& cfg, const Secret& secret) {
      DowngraderFragment f = gen_downgrader(
          secret, DowngraderConfig{width, pad, switch_work_bound(cfg.hw, 0)});
      DomainConfig& h = cfg.domains[hi];
      h.program = std::move(f.hi);
      h.slice = f.hi_slice;
      h.pad = f.hi_pad;
      cfg.domains[lo].program = std::move(f.observer);
    };
    return;
  }
  invalid("unknown generator '" + g.kind + "'");
}

ScenarioFile parse_scenario_text(std::string_view text,
                                 const std::filesystem::path& base_dir,
                                 std::string name) {
  pt::ptree tree;
  {
    std::istringstream in{std::string(text)};
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorCode::kParse,
                  "line " + std::to_string(e.line()) + ": " + e.message(),
                  static_cast<int>(e.line()));
    }
  }

  const pt::ptree* hardware = nullptr;
  const pt::ptree* protections = nullptr;
  const pt::ptree* experiment = nullptr;
  std::vector<std::pair<std::string, const pt::ptree*>> domain_sections;
  for (const auto& [key, child] : tree) {
    if (child.empty() && !child.data().empty()) {
      parse_fail(key, "key outside of any section");
    }
    if (key == "hardware") {
      hardware = &child;
    } else if (key == "protections") {
      protections = &child;
    } else if (key == "experiment") {
      experiment = &child;
    } else if (key.rfind("domain:", 0) == 0 && key.size() > 7) {
      domain_sections.emplace_back(key.substr(7), &child);
    } else {
      parse_fail("[" + key + "]", "unknown section");
    }
  }

  ScenarioFile file;
  file.source = base_dir;
  Scenario& sc = file.scenario;
  sc.name = std::move(name);

  Section hw_section("hardware", hardware);
  sc.machine.hw = read_hardware(hw_section);

  Section prot("protections", protections);
  Protections& pr = sc.machine.protections;
  pr.flush_on_switch = prot.flag("flush_on_switch", true);
  pr.colour_partitioning = prot.flag("colour_partitioning", true);
  pr.kernel_clone = prot.flag("kernel_clone", true);
  pr.pad_enabled = prot.flag("pad_enabled", true);
  pr.irq_partitioning = prot.flag("irq_partitioning", true);
  prot.finish();

  if (domain_sections.empty()) invalid("no [domain:<name>] sections");
  std::optional<DomainId> hi, lo;
  for (const auto& [dname, dtree] : domain_sections) {
    Section s("domain:" + dname, dtree);
    DomainConfig d;
    d.name = dname;
    for (std::uint64_t c : s.list("colours")) d.colours.push_back(static_cast<Colour>(c));
    std::sort(d.colours.begin(), d.colours.end());
    d.colours.erase(std::unique(d.colours.begin(), d.colours.end()), d.colours.end());
    d.slice = s.number("slice", d.slice);
    d.pad = s.number("pad", default_pad(sc.machine.hw));
    d.pages = s.number("pages", d.pages);
    for (std::uint64_t irq : s.list("irqs")) d.irqs.push_back(static_cast<IrqId>(irq));
    if (const auto devs = s.text("devices")) {
      for (const std::string& item : split(*devs, ',')) {
        const auto parts = split(item, ':');
        std::optional<std::uint64_t> a, b, c;
        if (parts.size() == 3) {
          a = to_number(parts[0]);
          b = to_number(parts[1]);
          c = to_number(parts[2]);
        }
        if (!a || !b || !c) parse_fail(s.where("devices"), "expected syscall:irq:latency");
        d.devices.push_back(Device{static_cast<std::uint32_t>(*a),
                                   static_cast<IrqId>(*b), *c});
      }
    }
    if (const auto prog = s.text("program")) d.program = load_program(base_dir, *prog);
    if (const auto filler = s.text("filler")) d.filler = load_program(base_dir, *filler);
    d.filler_margin = s.number("filler_margin", 0);
    const std::string role = s.text("role").value_or("other");
    const auto id = static_cast<DomainId>(sc.machine.domains.size());
    if (role == "hi") {
      if (hi) invalid("more than one Hi domain");
      hi = id;
    } else if (role == "lo") {
      if (lo) invalid("more than one Lo domain");
      lo = id;
    } else if (role != "other") {
      parse_fail(s.where("role"), "expected hi, lo or other");
    }
    s.finish();
    sc.machine.domains.push_back(std::move(d));
  }
  if (!hi || !lo) invalid("scenario needs exactly one Hi and one Lo domain");
  sc.hi = *hi;
  sc.lo = *lo;

  Section ex("experiment", experiment);
  const std::string mode = ex.text("mode").value_or("check-ni");
  const auto m = parse_mode(mode);
  if (!m) parse_fail(ex.where("mode"), "unknown mode '" + mode + "'");
  file.mode = *m;
  sc.secret_width = static_cast<unsigned>(ex.number("secret_width", 8));
  if (const auto secrets = ex.text("secrets"); secrets && *secrets != "exhaustive") {
    sc.secrets = ex.list("secrets");
  }
  sc.trials = ex.number("trials", 1);
  sc.step_budget = ex.number("step_budget", sc.step_budget);
  GeneratorSpec& g = file.generator;
  g.kind = ex.text("generator").value_or("none");
  g.level = ex.text("level").value_or(g.level);
  g.sets_per_bit = static_cast<std::uint32_t>(ex.number("sets_per_bit", g.sets_per_bit));
  g.base_set = static_cast<std::uint32_t>(ex.number("base_set", g.base_set));
  g.threshold = ex.optional_number("threshold");
  g.wait_chunk = ex.number("wait_chunk", g.wait_chunk);
  g.irq = static_cast<IrqId>(ex.number("irq", g.irq));
  g.io_syscall = static_cast<std::uint32_t>(ex.number("io_syscall", g.io_syscall));
  g.stride = ex.number("stride", g.stride);
  g.observer_chunk = ex.number("observer_chunk", g.observer_chunk);
  g.observer_samples = ex.number("observer_samples", g.observer_samples);
  g.io_latency = ex.optional_number("io_latency");
  g.downgrader_pad = ex.optional_number("downgrader_pad");
  const auto symbol = ex.text("symbol");
  ex.finish();

  sc.validate();
  apply_generator(sc, g);
  if (symbol) {
    symbol_extractor(sc, *symbol);  // rejects unknown names
    sc.symbol = *symbol;
  }
  sc.machine.validate();
  return file;
}

ScenarioFile parse_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  ScenarioFile f = parse_scenario_text(text, path.parent_path(), path.stem().string());
  f.source = path;
  return f;
}

void ScenarioFile::disable_mechanism(Mechanism m) {
  disable(scenario.machine.protections, m);
  scenario.machine.validate();
}

nlohmann::json ScenarioFile::canonical() const {
  using nlohmann::json;
  const MachineConfig& mc = scenario.machine;
  auto geom = [](const CacheGeometry& g) {
    return json{{"sets", g.sets}, {"ways", g.ways}, {"line_size", g.line_size},
                {"page_size", g.page_size}};
  };
  const TimeModelParams& p = mc.hw.params;
  json hw{{"l1i", geom(mc.hw.l1i)},
          {"l1d", geom(mc.hw.l1d)},
          {"llc", geom(mc.hw.llc)},
          {"tlb", geom(mc.hw.tlb)},
          {"predictor_entries", mc.hw.predictor_entries},
          {"memory_bytes", mc.hw.memory_bytes},
          {"params",
           {{"l1_hit", p.l1_hit}, {"llc_hit", p.llc_hit}, {"mem", p.mem},
            {"predict_ok", p.predict_ok}, {"mispredict", p.mispredict},
            {"tlb_miss_penalty", p.tlb_miss_penalty}, {"flush_base", p.flush_base},
            {"writeback_per_line", p.writeback_per_line},
            {"kernel_entry", p.kernel_entry}, {"kernel_exit", p.kernel_exit}}}};
  json domains = json::array();
  for (DomainId id = 0; id < mc.domains.size(); ++id) {
    const DomainConfig& d = mc.domains[id];
    json devices = json::array();
    for (const Device& dev : d.devices) {
      devices.push_back({{"syscall", dev.syscall}, {"irq", dev.irq}, {"latency", dev.latency}});
    }
    domains.push_back({{"name", d.name},
                       {"role", id == scenario.hi ? "hi" : id == scenario.lo ? "lo" : "other"},
                       {"colours", d.colours},
                       {"slice", d.slice},
                       {"pad", mc.pad_of(id)},
                       {"pages", d.pages},
                       {"irqs", d.irqs},
                       {"devices", devices},
                       {"program", disassemble(d.program)},
                       {"filler", disassemble(d.filler)},
                       {"filler_margin", d.filler_margin}});
  }
  const Protections& pr = mc.protections;
  const GeneratorSpec& g = generator;
  json gen{{"kind", g.kind}, {"level", g.level}, {"sets_per_bit", g.sets_per_bit},
           {"base_set", g.base_set}, {"wait_chunk", g.wait_chunk}, {"irq", g.irq},
           {"io_syscall", g.io_syscall}, {"stride", g.stride},
           {"observer_chunk", g.observer_chunk},
           {"observer_samples", g.observer_samples}};
  if (g.threshold) gen["threshold"] = *g.threshold;
  if (g.io_latency) gen["io_latency"] = *g.io_latency;
  if (g.downgrader_pad) gen["downgrader_pad"] = *g.downgrader_pad;
  return json{{"hardware", hw},
              {"domains", domains},
              {"protections",
               {{"flush_on_switch", pr.flush_on_switch},
                {"colour_partitioning", pr.colour_partitioning},
                {"kernel_clone", pr.kernel_clone},
                {"pad_enabled", pr.pad_enabled},
                {"irq_partitioning", pr.irq_partitioning}}},
              {"experiment",
               {{"mode", mode_name(mode)},
                {"secret_width", scenario.secret_width},
                {"secrets", scenario.secrets},
                {"trials", scenario.trials},
                {"step_budget", scenario.step_budget},
                {"symbol", scenario.symbol},
                {"generator", gen}}}};
}

std::string ScenarioFile::config_hash() const { return sha256_hex(canonical().dump()); }

}  // namespace timeprot
