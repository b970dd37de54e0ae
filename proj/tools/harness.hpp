#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothcal::harness {

// Malformed spec or flag value; exit status 2.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Exit { ok = 0, assertion_failed = 1, malformed = 2, aborted = 3 };

// Flat key-value text with one nesting level:
//
//   kind = calibrate
//   seed = 3
//   [calibrate]
//   adversary = threshold
//   T = 4
//   [assert]
//   max_K_smooth = 0.1
//
// '#' starts a comment. Top-level keys: kind, seed, out, profile. The
// parameter section must be named after the kind; [assert] holds
// min_<metric> / max_<metric> bounds on the summary metrics.
struct ExperimentSpec {
  std::string kind;
  std::uint64_t seed = 0;
  std::string out;
  std::string profile = "desk";
  std::map<std::string, std::string> params;
  std::map<std::string, double> asserts;

  nlohmann::json to_json() const;
};

const std::vector<std::string>& kinds();

// Parameter names of a kind with their default values.
const std::map<std::string, std::string>& parameter_defaults(const std::string& kind);

ExperimentSpec parse_spec(std::istream& is, const std::string& source = "spec");
ExperimentSpec read_spec_file(const std::string& path);

// Fills unset parameters from the defaults and rejects unknown keys.
void resolve(ExperimentSpec& spec);

struct RunOptions {
  std::string build_id = "unknown";
  std::ostream* log = nullptr;  // progress and PASS/FAIL lines
  bool timestamp = true;        // metadata.timestamp in the summary
};

// Writes the CSV(s) and summary.json under spec.out and returns the exit
// status. SpecError and internal aborts are mapped to their statuses.
Exit run(const ExperimentSpec& spec, const RunOptions& options);

}  // namespace smoothcal::harness
