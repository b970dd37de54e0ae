#include "harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

#ifndef SMOOTHCAL_BUILD_ID
#define SMOOTHCAL_BUILD_ID "unknown"
#endif

namespace {

const char* describe_kind(const std::string& kind) {
  if (kind == "regress") return "Online ridge regression with the windowed-regret check";
  if (kind == "calibrate") return "Play the calibration game and score the transcript";
  if (kind == "score") return "Score an existing transcript CSV";
  if (kind == "dynamics") return "Smooth calibrated learning in a finite game";
  return "Run acceptance criteria";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace smoothcal::harness;
  CLI::App app{"Smooth calibration experiments."};
  app.require_subcommand(1);

  std::string spec_path, out, profile;
  std::optional<std::uint64_t> seed;
  bool quiet = false, no_timestamp = false;
  app.add_option("--spec", spec_path, "Experiment spec file; flags override its values");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out, "Output directory (else $SMOOTHCAL_OUT, the spec, out/<kind>)");
  app.add_option("--profile", profile, "desk or theory");
  app.add_flag("--quiet", quiet, "Only errors on stderr");
  app.add_flag("--no-timestamp", no_timestamp, "Omit metadata.timestamp from the summary");

  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& kind : kinds()) {
    CLI::App* sub = app.add_subcommand(kind, describe_kind(kind));
    for (const auto& [key, def] : parameter_defaults(kind)) {
      sub->add_option("--" + key, flags[kind][key], "default: " + (def.empty() ? "none" : def));
    }
    // Global options may also follow the subcommand.
    sub->fallthrough();
    subs[kind] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(Exit::malformed);
  }

  std::string kind;
  for (const auto& [k, sub] : subs) {
    if (sub->parsed()) kind = k;
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    ExperimentSpec spec;
    if (!spec_path.empty()) {
      spec = read_spec_file(spec_path);
      if (spec.kind != kind) {
        throw SpecError("spec kind '" + spec.kind + "' does not match subcommand '" + kind + "'");
      }
    }
    spec.kind = kind;
    for (const auto& [key, value] : flags[kind]) {
      if (subs[kind]->count("--" + key)) spec.params[key] = value;
    }
    if (seed) spec.seed = *seed;
    if (!profile.empty()) spec.profile = profile;
    if (!out.empty()) {
      spec.out = out;
    } else if (const char* env = std::getenv("SMOOTHCAL_OUT"); env && *env) {
      spec.out = env;
    }

    RunOptions options;
    options.build_id = SMOOTHCAL_BUILD_ID;
    options.log = log;
    options.timestamp = !no_timestamp;
    return static_cast<int>(run(spec, options));
  } catch (const SpecError& e) {
    std::cerr << "malformed spec: " << e.what() << std::endl;
    return static_cast<int>(Exit::malformed);
  }
}
