// Copyright 2026 The rvtag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// rvtag command-line driver.
//
// Exit codes: 0 ok, 1 usage, 2 build error, 3 policy violation,
// 4 equivalence failure.

#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "rvtag/corpus.h"
#include "rvtag/pipeline.h"

namespace fs = std::filesystem;
using namespace rvtag;

namespace {

struct CommonFlags {
  std::vector<std::string> inputs;
  std::string config_path;
  std::vector<std::string> defsyms;
  std::string policy;
  std::string carrier;
  int coverage = 0;
  bool no_labels = false;
  bool cfi_label_direct_calls = false;
  std::string coverage_mode = "all";
  uint32_t max_pair_gap = kDefaultMaxPairGap;
  bool json = false;
};

void AddBuildFlags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Tag config file (falls back to $RVTAG_CONFIG)");
  cmd->add_option("--policy", f.policy, "Override the config policy")
      ->check(CLI::IsMember({"none", "cfi", "unarith", "coverage"}));
  cmd->add_option("--carrier", f.carrier, "Override the config carrier")
      ->check(CLI::IsMember({"lui", "addi", "custom"}));
  cmd->add_option("--coverage", f.coverage, "Override the config coverage N");
  cmd->add_flag("--no-labels", f.no_labels, "Disable metadata labels");
  cmd->add_flag("--cfi-label-direct-calls", f.cfi_label_direct_calls,
                "Also label direct calls inside the auipc/jalr pair");
  cmd->add_option("--coverage-mode", f.coverage_mode, "BCF placement: all branches or computed jumps only")
      ->check(CLI::IsMember({"all", "computed"}));
  cmd->add_option("--max-pair-gap", f.max_pair_gap, "Words allowed between a HI20/LO12 pair");
  cmd->add_option("--defsym", f.defsyms, "Define an assembler symbol, name=value");
  cmd->add_flag("--json", f.json, "Machine-readable output");
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot read '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replaces (or adds) `key = value` in config text.
std::string Override(const std::string& text, const std::string& key, const std::string& value) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    std::string k = eq == std::string::npos ? "" : line.substr(0, eq);
    k.erase(0, k.find_first_not_of(" \t"));
    k.erase(k.find_last_not_of(" \t") + 1);
    if (k != key) out += line + "\n";
  }
  return out + key + " = " + value + "\n";
}

TagConfig ResolveConfig(const CommonFlags& f) {
  std::string path = f.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("RVTAG_CONFIG")) path = env;
  }
  std::string text = path.empty() ? "" : ReadFile(path);
  std::string origin = path.empty() ? "<defaults>" : path;
  if (!f.policy.empty()) text = Override(text, "policy", f.policy);
  if (!f.carrier.empty()) text = Override(text, "carrier", f.carrier);
  if (f.coverage) text = Override(text, "coverage", std::to_string(f.coverage));
  if (f.no_labels) text = Override(text, "labels", "false");
  return ParseConfig(text, origin);
}

AssembleOptions AssembleFlags(const CommonFlags& f) {
  AssembleOptions o;
  for (const std::string& d : f.defsyms) {
    const auto eq = d.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::UsageError, fmt::format("--defsym '{}' needs name=value", d));
    o.defsyms[d.substr(0, eq)] = std::stoll(d.substr(eq + 1), nullptr, 0);
  }
  return o;
}

std::vector<SourceFile> Sources(const CommonFlags& f) {
  std::vector<SourceFile> out;
  for (const std::string& p : f.inputs) out.push_back({p, ReadFile(p)});
  return out;
}

BuildOptions MakeBuildOptions(const CommonFlags& f, std::optional<TagConfig> config) {
  BuildOptions b;
  b.config = std::move(config);
  b.instrument.label_direct_calls = f.cfi_label_direct_calls;
  b.instrument.coverage_mode = f.coverage_mode == "computed" ? CoverageMode::kComputedOnly : CoverageMode::kAllBranches;
  b.max_pair_gap = f.max_pair_gap;
  return b;
}

std::string Stem(const std::string& path) { return fs::path(path).stem().string(); }

// --- subcommands ------------------------------------------------------------

int CmdAssemble(const CommonFlags& f) {
  const Program program = Assemble(Sources(f), AssembleFlags(f));
  if (f.json) {
    nlohmann::json doc = nlohmann::json::array();
    for (const Fragment& frag : program.fragments) {
      doc.push_back({{"name", frag.name}, {"insns", frag.insns.size()}, {"relocations", frag.relocations.size()}});
    }
    std::cout << doc.dump(2) << "\n";
    return kExitOk;
  }
  for (const Fragment& frag : program.fragments) std::cout << DisassembleFragment(frag);
  return kExitOk;
}

int CmdBuild(const CommonFlags& f, bool no_tags, const std::string& out_dir) {
  std::optional<TagConfig> config;
  if (!no_tags) config = ResolveConfig(f);
  const BuildArtifacts build = BuildSources(Sources(f), AssembleFlags(f), MakeBuildOptions(f, config));
  fs::create_directories(out_dir);
  const std::string stem = Stem(f.inputs.front());
  const fs::path base = fs::path(out_dir) / (stem + ".base.rvti");
  WriteImage(build.baseline.image, base);
  std::optional<fs::path> tagged;
  if (build.tagged) {
    tagged = fs::path(out_dir) / (stem + ".tagged.rvti");
    WriteImage(build.tagged->image, *tagged);
  }
  if (f.json) {
    nlohmann::json doc{{"baseline", {{"path", base.string()}, {"text_bytes", build.baseline.image.text.size()}}}};
    if (tagged) doc["tagged"] = {{"path", tagged->string()}, {"text_bytes", build.tagged->image.text.size()}};
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << SizeTable(build);
    std::cout << "wrote " << base.string() << (tagged ? " " + tagged->string() : "") << "\n";
  }
  return kExitOk;
}

int CmdLink(const CommonFlags& f, bool no_tags, const std::string& out) {
  std::optional<TagConfig> config;
  if (!no_tags) config = ResolveConfig(f);
  const BuildArtifacts build = BuildSources(Sources(f), AssembleFlags(f), MakeBuildOptions(f, config));
  const LinkResult& linked = build.tagged ? *build.tagged : build.baseline;
  WriteImage(linked.image, out);
  if (f.json) {
    std::cout << nlohmann::json{{"path", out}, {"text_bytes", linked.image.text.size()}}.dump(2) << "\n";
  } else {
    std::cout << fmt::format("wrote {} ({} text bytes)\n", out, linked.image.text.size());
  }
  return kExitOk;
}

void PrintViolation(const RunResult& r) {
  if (r.violation) {
    std::cout << fmt::format("violation {} at pc 0x{:x}: {}\n", ViolationKindName(r.violation->kind),
                             r.violation->pc, r.violation->detail);
  }
}

int RunExit(const RunResult& r) {
  if (r.stop == StopReason::kPolicyViolation) return kExitPolicy;
  return r.stop == StopReason::kExit || r.stop == StopReason::kBreakpoint ? kExitOk : kExitBuild;
}

void DumpCoverage(const Image& image, const RunResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot write '{}'", path));
  out << CoverageJson(image, r).dump(2) << "\n";
}

void PrintRun(const RunResult& r, bool json) {
  if (json) {
    nlohmann::json doc{{"stop", StopReasonName(r.stop)},
                       {"exit_code", r.state.exit_code},
                       {"retired", r.counters.retired},
                       {"tag_fetches", r.counters.tag_fetches},
                       {"labels_seen", r.counters.labels_seen},
                       {"output", r.output}};
    if (r.violation) {
      doc["violation"] = {{"kind", ViolationKindName(r.violation->kind)},
                          {"pc", fmt::format("0x{:x}", r.violation->pc)},
                          {"detail", r.violation->detail}};
    }
    if (!r.fault.empty()) doc["fault"] = r.fault;
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::cout << r.output;
  std::cout << fmt::format("stop={} exit_code={} retired={} tag_fetches={} labels_seen={}\n", StopReasonName(r.stop),
                           r.state.exit_code, r.counters.retired, r.counters.tag_fetches, r.counters.labels_seen);
  if (!r.fault.empty()) std::cout << "fault: " << r.fault << "\n";
  PrintViolation(r);
}

int CmdRun(const std::string& image_path, const std::string& mode, uint64_t max_insns,
           const std::string& coverage_out, bool json) {
  const Image image = ReadImage(image_path);
  const RunResult r = Run(image, *ExecModeFromName(mode), RunLimits{max_insns});
  PrintRun(r, json);
  if (!coverage_out.empty()) DumpCoverage(image, r, coverage_out);
  return RunExit(r);
}

int CmdEnforce(const CommonFlags& f, uint64_t max_insns, const std::string& coverage_out) {
  const TagConfig config = ResolveConfig(f);
  const BuildArtifacts build = BuildSources(Sources(f), AssembleFlags(f), MakeBuildOptions(f, config));
  const RunResult r = Run(build.tagged->image, ExecMode::kAware, RunLimits{max_insns});
  if (!coverage_out.empty()) DumpCoverage(build.tagged->image, r, coverage_out);
  if (f.json) {
    PrintRun(r, true);
  } else if (r.violation) {
    PrintViolation(r);
  } else {
    std::cout << r.output;
    std::cout << fmt::format("ok policy={} stop={} exit_code={}\n", PolicyName(config.policy),
                             StopReasonName(r.stop), r.state.exit_code);
  }
  return RunExit(r);
}

struct Job {
  std::string name;
  std::vector<SourceFile> sources;
};

struct JobResult {
  std::string name;
  std::optional<DiffOutcome> outcome;
  std::string error;
};

std::vector<Job> Jobs(const CommonFlags& f, size_t corpus, uint64_t seed) {
  std::vector<Job> jobs;
  if (corpus > 0) {
    for (const CorpusProgram& p : GenerateCorpus(seed, corpus)) jobs.push_back({p.name, {{p.name, p.source}}});
  }
  for (const std::string& path : f.inputs) jobs.push_back({Stem(path), {{path, ReadFile(path)}}});
  return jobs;
}

std::vector<JobResult> RunJobs(const std::vector<Job>& jobs, const AssembleOptions& assemble,
                               const BuildOptions& options, uint64_t max_insns, unsigned workers) {
  std::vector<JobResult> results(jobs.size());
  auto work = [&](size_t first) {
    for (size_t i = first; i < jobs.size(); i += workers) {
      results[i].name = jobs[i].name;
      try {
        results[i].outcome = DiffRun(BuildSources(jobs[i].sources, assemble, options), RunLimits{max_insns});
      } catch (const Error& e) {
        results[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
  for (auto& t : threads) t.join();
  return results;
}

int CmdDiffRun(const CommonFlags& f, size_t corpus, uint64_t seed, uint64_t max_insns, unsigned jobs_n,
               bool report_mode) {
  const std::vector<Job> jobs = Jobs(f, corpus, seed);
  if (jobs.empty()) throw Error(ErrorKind::UsageError, "no inputs; give source files or --corpus N");
  if (corpus > 0 && !f.json) std::cout << fmt::format("corpus seed {}\n", seed);
  const TagConfig config = ResolveConfig(f);
  const AssembleOptions assemble = AssembleFlags(f);
  const unsigned workers = std::max(1u, jobs_n);

  std::vector<std::pair<std::string, BuildOptions>> variants = {{"", MakeBuildOptions(f, config)}};
  if (report_mode && config.policy == Policy::kCfi) {
    TagConfig with = config;
    with.labels_enabled = true;
    TagConfig without = config;
    without.labels_enabled = false;
    variants = {{"labels", MakeBuildOptions(f, with)}, {"no-labels", MakeBuildOptions(f, without)}};
  }

  int status = kExitOk;
  std::vector<std::pair<std::string, Report>> rows;
  for (const auto& [variant, options] : variants) {
    const std::vector<JobResult> results = RunJobs(jobs, assemble, options, max_insns, workers);
    ExecCounters base_total, tagged_total;
    SizeInfo base_size, tagged_size;
    if (!f.json) {
      if (!variant.empty()) std::cout << fmt::format("[{}]\n", variant);
      std::cout << fmt::format("{:<24}{:>12}{:>12}{:>10}{:>10}  {}\n", "program", "baseline", "tagged", "dynamic",
                               "static", "equivalence");
    }
    for (const JobResult& r : results) {
      const std::string row_name = variant.empty() ? r.name : r.name + "/" + variant;
      if (!r.outcome) {
        std::cerr << fmt::format("{}: {}\n", r.name, r.error);
        status = std::max(status, static_cast<int>(kExitBuild));
        continue;
      }
      const DiffOutcome& o = *r.outcome;
      if (o.divergence) status = kExitEquivalence;
      rows.emplace_back(row_name, o.report);
      base_total.retired += o.report.baseline.retired;
      base_total.tag_fetches += o.report.baseline.tag_fetches;
      tagged_total.retired += o.report.tagged.retired;
      tagged_total.tag_fetches += o.report.tagged.tag_fetches;
      base_size.fragment_bytes += o.report.baseline_size.fragment_bytes;
      base_size.image_text_bytes += o.report.baseline_size.image_text_bytes;
      tagged_size.fragment_bytes += o.report.tagged_size.fragment_bytes;
      tagged_size.image_text_bytes += o.report.tagged_size.image_text_bytes;
      if (!f.json) {
        std::cout << fmt::format("{:<24}{:>12}{:>12}{:>9.1f}%{:>9.1f}%  {}\n", r.name, o.report.baseline.total(),
                                 o.report.tagged.total(), o.report.dynamic_overhead_pct,
                                 o.report.static_overhead_pct, o.divergence ? "FAIL" : "ok");
        if (o.divergence) std::cout << "  " << o.divergence->Describe() << "\n";
      }
    }
    const Report aggregate = MakeReport(base_total, tagged_total, base_size, tagged_size);
    rows.emplace_back(variant.empty() ? "aggregate" : "aggregate/" + variant, aggregate);
    if (!f.json) {
      std::cout << fmt::format("{:<24}{:>12}{:>12}{:>9.1f}%{:>9.1f}%\n", "aggregate", base_total.total(),
                               tagged_total.total(), aggregate.dynamic_overhead_pct, aggregate.static_overhead_pct);
      if (report_mode) std::cout << aggregate.Text() << aggregate.MachineLines();
    }
  }
  if (f.json) {
    const nlohmann::json doc = ReportDocument(rows);
    ReportFromJson(doc);  // read-back validation
    std::cout << doc.dump(2) << "\n";
  }
  if (status == kExitEquivalence) std::cerr << "EquivalenceFailure: tagged compat run diverged from baseline\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rvtag: RISC-V instruction tagging toolchain"};
  app.require_subcommand(1);
  CommonFlags f;

  auto* assemble = app.add_subcommand("assemble", "Assemble sources and print the fragments");
  assemble->add_option("inputs", f.inputs, "Assembly sources")->required()->check(CLI::ExistingFile);
  assemble->add_option("--defsym", f.defsyms, "Define an assembler symbol, name=value");
  assemble->add_flag("--json", f.json, "Machine-readable output");

  bool no_tags = false;
  std::string out_dir = ".";
  auto* build = app.add_subcommand("build", "Build baseline and tagged RVTI images");
  build->add_option("inputs", f.inputs, "Assembly sources")->required()->check(CLI::ExistingFile);
  build->add_flag("--no-tags", no_tags, "Only build the untagged baseline image");
  build->add_option("-o,--out-dir", out_dir, "Output directory");
  AddBuildFlags(build, f);

  std::string link_out = "a.rvti";
  auto* link = app.add_subcommand("link", "Link one image: tagged, or the baseline with --no-tags");
  link->add_option("inputs", f.inputs, "Assembly sources")->required()->check(CLI::ExistingFile);
  link->add_flag("--no-tags", no_tags, "Link without tags");
  link->add_option("-o,--out", link_out, "Output image");
  AddBuildFlags(link, f);

  std::string image_path, mode = "compat", coverage_out;
  uint64_t max_insns = kDefaultMaxRetired;
  auto* run = app.add_subcommand("run", "Execute an RVTI image");
  run->add_option("image", image_path, "RVTI image")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "compat or aware")->check(CLI::IsMember({"compat", "aware"}));
  run->add_option("--max-insns", max_insns, "Retired instruction limit");
  run->add_option("--dump-coverage", coverage_out, "Write coverage maps as JSON");
  run->add_flag("--json", f.json, "Machine-readable output");

  size_t corpus = 0;
  uint64_t seed = 1;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto add_diff_flags = [&](CLI::App* cmd) {
    cmd->add_option("inputs", f.inputs, "Assembly sources")->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus, "Also diff-run N generated programs");
    cmd->add_option("--seed", seed, "Corpus generator seed");
    cmd->add_option("--max-insns", max_insns, "Retired instruction limit per run");
    cmd->add_option("-j,--jobs", jobs, "Worker threads");
    AddBuildFlags(cmd, f);
  };
  auto* diff = app.add_subcommand("diff-run", "Compare baseline and tagged-compat runs");
  add_diff_flags(diff);
  auto* report = app.add_subcommand("report", "Overhead report; cfi reports cover labels and no-labels builds");
  add_diff_flags(report);

  auto* enforce = app.add_subcommand("enforce", "Build tagged and run with policy enforcement");
  enforce->add_option("inputs", f.inputs, "Assembly sources")->required()->check(CLI::ExistingFile);
  enforce->add_option("--max-insns", max_insns, "Retired instruction limit");
  enforce->add_option("--dump-coverage", coverage_out, "Write coverage maps as JSON");
  AddBuildFlags(enforce, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*assemble) return CmdAssemble(f);
    if (*build) return CmdBuild(f, no_tags, out_dir);
    if (*link) return CmdLink(f, no_tags, link_out);
    if (*run) return CmdRun(image_path, mode, max_insns, coverage_out, f.json);
    if (*diff) return CmdDiffRun(f, corpus, seed, max_insns, jobs, false);
    if (*report) return CmdDiffRun(f, corpus, seed, max_insns, jobs, true);
    if (*enforce) return CmdEnforce(f, max_insns, coverage_out);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBuild;
  }
  return kExitUsage;
}
