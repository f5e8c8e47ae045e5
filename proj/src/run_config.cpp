#include "mmem/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "mmem/error.hpp"
#include "mmem/text.hpp"

namespace mmem {

namespace {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<Entry> read_entries(std::istream& in, std::string_view schema) {
  std::vector<Entry> out;
  std::set<std::string> seen;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
    }
    Entry e{std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))), n};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
    if (!seen.insert(e.key).second) throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  if (out.empty() || out.front().key != "schema") throw ConfigError("first key must be 'schema'");
  if (out.front().value != schema) {
    throw ConfigError("schema: expected '" + std::string(schema) + "', got '" + out.front().value + "'");
  }
  out.erase(out.begin());
  return out;
}

[[noreturn]] void bad_value(const Entry& e, std::string_view expected) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + ": expected " + std::string(expected) +
                    ", got '" + e.value + "'");
}

double as_double(const Entry& e) {
  auto v = parse_double(e.value);
  if (!v || !std::isfinite(*v)) bad_value(e, "a number");
  return *v;
}

template <typename Int>
Int as_int(const Entry& e) {
  Int v{};
  auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (res.ec != std::errc{} || res.ptr != e.value.data() + e.value.size()) bad_value(e, "an integer");
  return v;
}

bool as_bool(const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  bad_value(e, "true or false");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

// Key table shared by the parser and the serializer so the two cannot drift.
template <typename T>
struct Field {
  std::string key;
  std::function<void(T&, const Entry&)> set;
  std::function<std::string(const T&)> get;
};

std::vector<Field<RunConfig>> run_fields() {
  using C = RunConfig;
  std::vector<Field<C>> f;
  auto real = [&](std::string key, auto member) {
    f.push_back({key, [member](C& c, const Entry& e) { member(c) = as_double(e); },
                 [member](const C& c) { return format_double(member(const_cast<C&>(c))); }});
  };
  auto integer = [&](std::string key, auto member) {
    f.push_back({key,
                 [member](C& c, const Entry& e) {
                   member(c) = as_int<std::remove_reference_t<decltype(member(c))>>(e);
                 },
                 [member](const C& c) { return std::to_string(member(const_cast<C&>(c))); }});
  };
  auto boolean = [&](std::string key, auto member) {
    f.push_back({key, [member](C& c, const Entry& e) { member(c) = as_bool(e); },
                 [member](const C& c) { return bool_str(member(const_cast<C&>(c))); }});
  };

  integer("seed", [](C& c) -> std::uint64_t& { return c.seed; });
  f.push_back({"endpoints",
               [](C& c, const Entry& e) {
                 c.endpoints.clear();
                 for (const auto& s : split(e.value, ',')) {
                   try {
                     c.endpoints.push_back(parse_endpoint(s));
                   } catch (const Error&) {
                     bad_value(e, "a list of os, dfs");
                   }
                 }
               },
               [](const C& c) {
                 std::string s;
                 for (auto ep : c.endpoints) s += (s.empty() ? "" : ",") + std::string(to_string(ep));
                 return s;
               }});
  f.push_back({"outcomes", [](C& c, const Entry& e) { c.outcomes = e.value; },
               [](const C& c) { return c.outcomes.generic_string(); }});
  f.push_back({"outcome_policy",
               [](C& c, const Entry& e) {
                 if (e.value == "both") {
                   c.outcome_policy = OutcomePolicy::kRequireBothEndpoints;
                 } else if (e.value == "selected") {
                   c.outcome_policy = OutcomePolicy::kSelectedEndpointOnly;
                 } else {
                   bad_value(e, "both or selected");
                 }
               },
               [](const C& c) {
                 return std::string(c.outcome_policy == OutcomePolicy::kRequireBothEndpoints ? "both" : "selected");
               }});
  f.push_back({"output_dir", [](C& c, const Entry& e) { c.output_dir = e.value; },
               [](const C& c) { return c.output_dir.generic_string(); }});
  boolean("output.svg", [](C& c) -> bool& { return c.write_svg; });

  integer("cv.n_folds", [](C& c) -> int& { return c.cv.n_folds; });
  integer("cv.n_boot", [](C& c) -> int& { return c.cv.n_boot; });
  real("cv.deep_val_fraction", [](C& c) -> double& { return c.cv.deep_val_fraction; });
  f.push_back({"cv.weights",
               [](C& c, const Entry& e) {
                 if (e.value == "per-fold") {
                   c.cv.global_weights = false;
                 } else if (e.value == "global") {
                   c.cv.global_weights = true;
                 } else {
                   bad_value(e, "per-fold or global");
                 }
               },
               [](const C& c) { return std::string(c.cv.global_weights ? "global" : "per-fold"); }});
  f.push_back({"cv.horizons",
               [](C& c, const Entry& e) {
                 c.cv.horizons_years.clear();
                 for (const auto& s : split(e.value, ',')) {
                   auto v = parse_double(s);
                   if (!v || !(*v > 0.0)) bad_value(e, "a list of positive years");
                   c.cv.horizons_years.push_back(*v);
                 }
               },
               [](const C& c) {
                 std::string s;
                 for (double h : c.cv.horizons_years) s += (s.empty() ? "" : ",") + format_double(h);
                 return s;
               }});

  real("preprocess.missing_threshold", [](C& c) -> double& { return c.cv.preprocess.missing_threshold; });
  real("preprocess.correlation_cutoff", [](C& c) -> double& { return c.cv.preprocess.correlation_cutoff; });
  integer("preprocess.n_splits", [](C& c) -> int& { return c.cv.preprocess.n_splits; });
  real("preprocess.val_fraction", [](C& c) -> double& { return c.cv.preprocess.val_fraction; });
  integer("preprocess.max_split_retries", [](C& c) -> int& { return c.cv.preprocess.max_split_retries; });
  integer("select.max_features", [](C& c) -> int& { return c.cv.select.max_features; });
  f.push_back({"cox.ties",
               [](C& c, const Entry& e) {
                 TieMethod t;
                 if (e.value == "efron") {
                   t = TieMethod::kEfron;
                 } else if (e.value == "breslow") {
                   t = TieMethod::kBreslow;
                 } else {
                   bad_value(e, "efron or breslow");
                 }
                 c.cv.preprocess.cox.ties = t;
                 c.cv.select.cox.ties = t;
               },
               [](const C& c) { return std::string(c.cv.select.cox.ties == TieMethod::kEfron ? "efron" : "breslow"); }});

  integer("deep.proj_dim", [](C& c) -> Eigen::Index& { return c.cv.deep.proj_dim; });
  integer("deep.n_heads", [](C& c) -> int& { return c.cv.deep.n_heads; });
  integer("deep.n_landmarks", [](C& c) -> Eigen::Index& { return c.cv.deep.n_landmarks; });
  integer("deep.pinv_iters", [](C& c) -> int& { return c.cv.deep.pinv_iters; });
  real("deep.dropout", [](C& c) -> double& { return c.cv.deep.dropout; });
  real("deep.lr", [](C& c) -> double& { return c.cv.deep.lr; });
  integer("deep.epochs", [](C& c) -> int& { return c.cv.deep.epochs; });
  integer("deep.plateau_patience", [](C& c) -> int& { return c.cv.deep.plateau_patience; });
  real("deep.plateau_gamma", [](C& c) -> double& { return c.cv.deep.plateau_gamma; });
  integer("deep.train_bag_cap", [](C& c) -> Eigen::Index& { return c.cv.deep.train_bag_cap; });
  boolean("deep.use_attention", [](C& c) -> bool& { return c.cv.deep.use_attention; });
  return f;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

void RunConfig::validate() const {
  if (endpoints.empty()) throw ConfigError("endpoints: at least one endpoint is required");
  std::set<Endpoint> eps(endpoints.begin(), endpoints.end());
  if (eps.size() != endpoints.size()) throw ConfigError("endpoints: duplicate endpoint");
  if (outcomes.empty()) throw ConfigError("outcomes: path is required");
  if (modalities.empty()) throw ConfigError("modality: at least one modality is required");
  std::set<std::string> names;
  for (const auto& m : modalities) {
    if (m.path.empty()) throw ConfigError("modality." + m.name + ".path: path is required");
    if (!names.insert(m.name).second) throw ConfigError("modality." + m.name + ": duplicate name");
  }
  if (cv.n_folds < 2) throw ConfigError("cv.n_folds: must be >= 2");
  if (cv.n_boot < 1) throw ConfigError("cv.n_boot: must be >= 1");
  if (!(cv.deep_val_fraction > 0.0 && cv.deep_val_fraction < 1.0)) {
    throw ConfigError("cv.deep_val_fraction: must be in (0, 1)");
  }
  if (cv.horizons_years.empty()) throw ConfigError("cv.horizons: at least one horizon is required");
  const auto& p = cv.preprocess;
  if (!(p.missing_threshold >= 0.0 && p.missing_threshold <= 1.0)) {
    throw ConfigError("preprocess.missing_threshold: must be in [0, 1]");
  }
  if (!(p.correlation_cutoff > 0.0 && p.correlation_cutoff <= 1.0)) {
    throw ConfigError("preprocess.correlation_cutoff: must be in (0, 1]");
  }
  if (p.n_splits < 1) throw ConfigError("preprocess.n_splits: must be >= 1");
  if (!(p.val_fraction > 0.0 && p.val_fraction < 1.0)) throw ConfigError("preprocess.val_fraction: must be in (0, 1)");
  if (p.max_split_retries < 1) throw ConfigError("preprocess.max_split_retries: must be >= 1");
  if (cv.select.max_features < 1) throw ConfigError("select.max_features: must be >= 1");
  cv.deep.validate();
}

void RunConfig::check_paths() const {
  auto check = [&](const std::string& field, const std::filesystem::path& p) {
    if (!std::filesystem::is_regular_file(resolve(p))) {
      throw ConfigError(field + ": file not found: " + resolve(p).string());
    }
  };
  check("outcomes", outcomes);
  for (const auto& m : modalities) check("modality." + m.name + ".path", m.path);
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  const auto fields = run_fields();
  std::map<std::string, std::size_t> modality_index;
  for (const auto& e : read_entries(in, kRunSchema)) {
    if (e.key.rfind("modality.", 0) == 0) {
      const auto rest = std::string_view(e.key).substr(9);
      const auto dot = rest.rfind('.');
      const std::string name(rest.substr(0, dot == std::string_view::npos ? 0 : dot));
      const std::string attr(dot == std::string_view::npos ? "" : rest.substr(dot + 1));
      if (!valid_name(name) || (attr != "kind" && attr != "path")) {
        throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
      }
      auto [it, fresh] = modality_index.emplace(name, c.modalities.size());
      if (fresh) c.modalities.push_back({name, ModalityKind::kTable, {}});
      ModalityInput& m = c.modalities[it->second];
      if (attr == "path") {
        m.path = e.value;
      } else if (e.value == "table") {
        m.kind = ModalityKind::kTable;
      } else if (e.value == "bags") {
        m.kind = ModalityKind::kBags;
      } else {
        bad_value(e, "table or bags");
      }
      continue;
    }
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == e.key; });
    if (it == fields.end()) throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    it->set(c, e);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return parse_run_config(in, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream s;
  s << "schema = " << kRunSchema << '\n';
  const auto fields = run_fields();
  for (const auto& f : fields) {
    if (f.key == "cv.n_folds") {
      for (const auto& m : c.modalities) {
        s << "modality." << m.name << ".kind = " << (m.kind == ModalityKind::kTable ? "table" : "bags") << '\n';
        s << "modality." << m.name << ".path = " << m.path.generic_string() << '\n';
      }
    }
    s << f.key << " = " << f.get(c) << '\n';
  }
  return s.str();
}

// ------------------------------------------------------------------ synth spec

SynthSpec default_synth_spec() {
  SynthSpec s;
  s.n_patients = 300;
  s.seed = 7;
  s.modalities = {{"clinical", 1.0, 3, 1, 0.05}, {"pathology", 1.0, 3, 0, 0.0}, {"genomics", 1.0, 3, 0, 0.0}};
  s.bags = BagSpec{};
  return s;
}

SynthSpec parse_synth_spec(std::istream& in) {
  SynthSpec s;
  s.modalities.clear();
  std::map<std::string, std::size_t> index;
  for (const auto& e : read_entries(in, kSynthSchema)) {
    const std::string& k = e.key;
    if (k == "n_patients") {
      s.n_patients = as_int<std::size_t>(e);
    } else if (k == "seed") {
      s.seed = as_int<std::uint64_t>(e);
    } else if (k == "lambda") {
      s.lambda = as_double(e);
    } else if (k == "c_max") {
      s.c_max = as_double(e);
    } else if (k == "dfs_rate_factor") {
      s.dfs_rate_factor = as_double(e);
    } else if (k.rfind("bags.", 0) == 0) {
      if (!s.bags) s.bags = BagSpec{};
      const std::string a = k.substr(5);
      if (a == "name") {
        if (!valid_name(e.value)) bad_value(e, "a name of letters, digits, '_' or '-'");
        s.bags->name = e.value;
      } else if (a == "signal_beta") {
        s.bags->signal_beta = as_double(e);
      } else if (a == "min_tiles") {
        s.bags->min_tiles = as_int<Eigen::Index>(e);
      } else if (a == "max_tiles") {
        s.bags->max_tiles = as_int<Eigen::Index>(e);
      } else if (a == "dim") {
        s.bags->dim = as_int<Eigen::Index>(e);
      } else if (a == "tile_noise") {
        s.bags->tile_noise = as_double(e);
      } else if (a == "write_coords") {
        s.bags->write_coords = as_bool(e);
      } else {
        throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
      }
    } else if (k.rfind("modality.", 0) == 0) {
      const auto rest = std::string_view(k).substr(9);
      const auto dot = rest.rfind('.');
      const std::string name(rest.substr(0, dot == std::string_view::npos ? 0 : dot));
      const std::string a(dot == std::string_view::npos ? "" : rest.substr(dot + 1));
      if (!valid_name(name)) throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
      auto [it, fresh] = index.emplace(name, s.modalities.size());
      if (fresh) s.modalities.push_back({name, 1.0, 3, 0, 0.0});
      auto& m = s.modalities[it->second];
      if (a == "signal_beta") {
        m.signal_beta = as_double(e);
      } else if (a == "n_noise") {
        m.n_noise = as_int<int>(e);
      } else if (a == "n_categorical_noise") {
        m.n_categorical_noise = as_int<int>(e);
      } else if (a == "missing_rate") {
        m.missing_rate = as_double(e);
      } else {
        throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
      }
    } else {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k + "'");
    }
  }
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read synth spec " + path.string());
  try {
    return parse_synth_spec(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_synth_spec(const SynthSpec& s) {
  std::ostringstream o;
  o << "schema = " << kSynthSchema << '\n'
    << "n_patients = " << s.n_patients << '\n'
    << "seed = " << s.seed << '\n'
    << "lambda = " << format_double(s.lambda) << '\n'
    << "c_max = " << format_double(s.c_max) << '\n'
    << "dfs_rate_factor = " << format_double(s.dfs_rate_factor) << '\n';
  for (const auto& m : s.modalities) {
    o << "modality." << m.name << ".signal_beta = " << format_double(m.signal_beta) << '\n'
      << "modality." << m.name << ".n_noise = " << m.n_noise << '\n'
      << "modality." << m.name << ".n_categorical_noise = " << m.n_categorical_noise << '\n'
      << "modality." << m.name << ".missing_rate = " << format_double(m.missing_rate) << '\n';
  }
  if (s.bags) {
    o << "bags.name = " << s.bags->name << '\n'
      << "bags.signal_beta = " << format_double(s.bags->signal_beta) << '\n'
      << "bags.min_tiles = " << s.bags->min_tiles << '\n'
      << "bags.max_tiles = " << s.bags->max_tiles << '\n'
      << "bags.dim = " << s.bags->dim << '\n'
      << "bags.tile_noise = " << format_double(s.bags->tile_noise) << '\n'
      << "bags.write_coords = " << bool_str(s.bags->write_coords) << '\n';
  }
  return o.str();
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

}  // namespace mmem
