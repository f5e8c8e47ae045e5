#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmem/cvharness.hpp"
#include "mmem/datamodel.hpp"
#include "mmem/synthgen.hpp"

namespace mmem {

inline constexpr std::string_view kRunSchema = "mmem-run/1";
inline constexpr std::string_view kSynthSchema = "mmem-synth/1";

enum class ModalityKind { kTable, kBags };

struct ModalityInput {
  std::string name;
  ModalityKind kind = ModalityKind::kTable;
  std::filesystem::path path;  // relative paths are relative to the config file
};

// Run configuration. File form: one `key = value` per line, `#` comments,
// first key `schema = mmem-run/1`. Unknown or repeated keys are errors.
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<Endpoint> endpoints{Endpoint::kOs, Endpoint::kDfs};
  std::filesystem::path outcomes;
  OutcomePolicy outcome_policy = OutcomePolicy::kRequireBothEndpoints;
  std::vector<ModalityInput> modalities;
  CvConfig cv;
  std::filesystem::path output_dir = "results";
  bool write_svg = true;

  // Directory of the file the config was read from; not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  // Structural checks (ConfigError naming the field).
  void validate() const;
  // Every referenced input file exists (ConfigError naming the path).
  void check_paths() const;
};

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical file form; parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const RunConfig& c);

SynthSpec parse_synth_spec(std::istream& in);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string serialize_synth_spec(const SynthSpec& s);
// Three tabular modalities plus one bag modality.
SynthSpec default_synth_spec();

std::string sha256_hex(std::string_view data);

}  // namespace mmem
