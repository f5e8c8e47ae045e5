#include "mmem/datamodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mmem/error.hpp"
#include "mmem/text.hpp"

namespace mmem {

// ---------------------------------------------------------------- text utils

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(std::string_view field) {
  const bool needs = field.find_first_of(",\"\n") != std::string_view::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------- endpoints

std::string_view to_string(Endpoint e) { return e == Endpoint::kOs ? "os" : "dfs"; }

Endpoint parse_endpoint(std::string_view s) {
  if (s == "os" || s == "OS") return Endpoint::kOs;
  if (s == "dfs" || s == "DFS") return Endpoint::kDfs;
  throw ConfigError("unknown endpoint '" + std::string(s) + "' (expected os or dfs)");
}

std::size_t count_events(std::span<const SurvivalOutcome> outcomes) {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.event; }));
}

// ---------------------------------------------------------------- FeatureTable

FeatureTable::FeatureTable(std::vector<std::string> patient_ids, std::vector<Column> columns,
                           Eigen::MatrixXd values, MissingMask missing)
    : patient_ids_(std::move(patient_ids)),
      columns_(std::move(columns)),
      values_(std::move(values)),
      missing_(std::move(missing)) {
  if (values_.rows() != static_cast<Eigen::Index>(patient_ids_.size()) ||
      values_.cols() != static_cast<Eigen::Index>(columns_.size())) {
    throw DataError("feature table: values shape does not match ids/columns");
  }
  if (missing_.rows() != values_.rows() || missing_.cols() != values_.cols()) {
    throw DataError("feature table: missing mask shape differs from values shape");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : patient_ids_) {
    if (!seen.insert(id).second) throw DataError("feature table: duplicate patient id '" + id + "'");
  }
  seen.clear();
  for (const auto& c : columns_) {
    if (!seen.insert(c.name).second) throw DataError("feature table: duplicate column '" + c.name + "'");
  }
}

FeatureTable FeatureTable::numeric(std::vector<std::string> patient_ids,
                                   std::vector<std::string> column_names,
                                   Eigen::MatrixXd values) {
  std::vector<Column> cols;
  cols.reserve(column_names.size());
  for (auto& n : column_names) cols.push_back(Column{std::move(n), ColumnKind::kNumeric, {}});
  MissingMask mask = MissingMask::Constant(values.rows(), values.cols(), false);
  return FeatureTable(std::move(patient_ids), std::move(cols), std::move(values), std::move(mask));
}

std::vector<std::string> FeatureTable::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

std::optional<Eigen::Index> FeatureTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return static_cast<Eigen::Index>(i);
  }
  return std::nullopt;
}

const std::string& FeatureTable::category(Eigen::Index r, Eigen::Index c) const {
  const auto& col = column(c);
  if (col.kind != ColumnKind::kCategorical || missing_(r, c)) {
    throw PreconditionError("cell is not an observed categorical value");
  }
  return col.levels.at(static_cast<std::size_t>(values_(r, c)));
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), cols());
  MissingMask m(static_cast<Eigen::Index>(rows.size()), cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    ids.push_back(patient_ids_.at(rows[i]));
    v.row(static_cast<Eigen::Index>(i)) = values_.row(r);
    m.row(static_cast<Eigen::Index>(i)) = missing_.row(r);
  }
  return FeatureTable(std::move(ids), columns_, std::move(v), std::move(m));
}

FeatureTable FeatureTable::select_columns(std::span<const Eigen::Index> idx) const {
  std::vector<Column> cs;
  Eigen::MatrixXd v(rows(), static_cast<Eigen::Index>(idx.size()));
  MissingMask m(rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    cs.push_back(column(idx[j]));
    v.col(static_cast<Eigen::Index>(j)) = values_.col(idx[j]);
    m.col(static_cast<Eigen::Index>(j)) = missing_.col(idx[j]);
  }
  return FeatureTable(patient_ids_, std::move(cs), std::move(v), std::move(m));
}

FeatureTable FeatureTable::select_columns(std::span<const std::string> names) const {
  std::vector<Eigen::Index> idx;
  idx.reserve(names.size());
  for (const auto& n : names) {
    auto c = column_index(n);
    if (!c) throw DataError("feature table has no column '" + n + "'");
    idx.push_back(*c);
  }
  return select_columns(std::span<const Eigen::Index>(idx));
}

Eigen::MatrixXd FeatureTable::matrix(std::span<const std::string> names) const {
  return select_columns(names).values();
}

void RiskScoreTable::validate() const {
  if (modality_names.empty()) throw PreconditionError("risk score table needs at least one modality");
  if (scores.rows() != static_cast<Eigen::Index>(patient_ids.size()) ||
      scores.cols() != static_cast<Eigen::Index>(modality_names.size())) {
    throw PreconditionError("risk score table shape mismatch");
  }
  if (!scores.allFinite()) throw PreconditionError("risk score table contains non-finite scores");
}

// ---------------------------------------------------------------- CSV ingestion

namespace {

constexpr std::array<std::string_view, 4> kReserved = {"os_days", "os_event", "dfs_days",
                                                       "dfs_event"};

bool is_reserved(std::string_view name) {
  return name == kPatientIdColumn ||
         std::find(kReserved.begin(), kReserved.end(), name) != kReserved.end();
}

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

RawCsv read_raw_csv(std::istream& in) {
  RawCsv raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    auto fields = split_csv_record(line);
    for (auto& f : fields) f = std::string(trim(f));
    if (raw.header.empty()) {
      raw.header = std::move(fields);
      continue;
    }
    if (fields.size() != raw.header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(raw.header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    raw.rows.push_back(std::move(fields));
    raw.line_numbers.push_back(line_no);
  }
  if (raw.header.empty()) throw DataError("csv: missing header row");
  if (raw.header.front() != kPatientIdColumn) {
    throw DataError("csv: first column must be '" + std::string(kPatientIdColumn) + "'");
  }
  return raw;
}

void check_unique_ids(const RawCsv& raw) {
  std::unordered_map<std::string, std::size_t> first_line;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto& id = raw.rows[i][0];
    if (id.empty()) throw DataError("line " + std::to_string(raw.line_numbers[i]) + ": empty patient_id");
    auto [it, inserted] = first_line.emplace(id, raw.line_numbers[i]);
    if (!inserted) {
      throw DataError("duplicate patient id '" + id + "' on lines " + std::to_string(it->second) +
                      " and " + std::to_string(raw.line_numbers[i]));
    }
  }
}

FeatureTable build_table(const RawCsv& raw) {
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 1; j < raw.header.size(); ++j) {
    if (!is_reserved(raw.header[j])) feature_cols.push_back(j);
  }
  const auto n = static_cast<Eigen::Index>(raw.rows.size());
  const auto p = static_cast<Eigen::Index>(feature_cols.size());
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(n, p, std::nan(""));
  MissingMask missing = MissingMask::Constant(n, p, false);
  std::vector<Column> columns;
  std::vector<std::string> ids;
  for (const auto& r : raw.rows) ids.push_back(r[0]);

  for (Eigen::Index c = 0; c < p; ++c) {
    const std::size_t src = feature_cols[static_cast<std::size_t>(c)];
    bool numeric = true;
    for (const auto& r : raw.rows) {
      if (!r[src].empty() && !parse_double(r[src])) {
        numeric = false;
        break;
      }
    }
    Column col{raw.header[src], numeric ? ColumnKind::kNumeric : ColumnKind::kCategorical, {}};
    if (!numeric) {
      std::set<std::string> levels;
      for (const auto& r : raw.rows) {
        if (!r[src].empty()) levels.insert(r[src]);
      }
      col.levels.assign(levels.begin(), levels.end());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& cell = raw.rows[static_cast<std::size_t>(i)][src];
      if (cell.empty()) {
        missing(i, c) = true;
      } else if (numeric) {
        values(i, c) = *parse_double(cell);
      } else {
        auto it = std::lower_bound(col.levels.begin(), col.levels.end(), cell);
        values(i, c) = static_cast<double>(it - col.levels.begin());
      }
    }
    columns.push_back(std::move(col));
  }
  return FeatureTable(std::move(ids), std::move(columns), std::move(values), std::move(missing));
}

std::optional<SurvivalOutcome> parse_outcome(const std::string& time_cell,
                                             const std::string& event_cell, std::size_t line,
                                             std::string_view endpoint) {
  if (time_cell.empty() || event_cell.empty()) return std::nullopt;
  const auto where = "line " + std::to_string(line) + " (" + std::string(endpoint) + "): ";
  auto t = parse_double(time_cell);
  if (!t || !std::isfinite(*t)) throw DataError(where + "time '" + time_cell + "' is not a number");
  if (*t < 0) throw DataError(where + "negative time " + time_cell);
  auto e = parse_double(event_cell);
  if (!e || (*e != 0.0 && *e != 1.0)) {
    throw DataError(where + "event indicator must be 0 or 1, found '" + event_cell + "'");
  }
  return SurvivalOutcome{*t, *e == 1.0};
}

std::size_t header_index(const RawCsv& raw, std::string_view name) {
  auto it = std::find(raw.header.begin(), raw.header.end(), name);
  if (it == raw.header.end()) throw DataError("csv: missing required column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - raw.header.begin());
}

std::ifstream open_input(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

CohortFile parse_cohort_csv(std::istream& in, Endpoint endpoint, OutcomePolicy policy) {
  RawCsv raw = read_raw_csv(in);
  check_unique_ids(raw);
  const std::size_t os_t = header_index(raw, "os_days");
  const std::size_t os_e = header_index(raw, "os_event");
  const std::size_t dfs_t = header_index(raw, "dfs_days");
  const std::size_t dfs_e = header_index(raw, "dfs_event");

  CohortFile out;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto& r = raw.rows[i];
    const auto line = raw.line_numbers[i];
    auto os = parse_outcome(r[os_t], r[os_e], line, "os");
    auto dfs = parse_outcome(r[dfs_t], r[dfs_e], line, "dfs");
    const auto& selected = endpoint == Endpoint::kOs ? os : dfs;
    if (!selected) continue;
    if (policy == OutcomePolicy::kRequireBothEndpoints && (!os || !dfs)) continue;
    out.outcomes.emplace(r[0], *selected);
  }
  out.features = build_table(raw);
  return out;
}

CohortFile parse_cohort_csv(const std::filesystem::path& path, Endpoint endpoint,
                            OutcomePolicy policy) {
  auto in = open_input(path);
  try {
    return parse_cohort_csv(in, endpoint, policy);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

FeatureTable parse_feature_csv(std::istream& in) {
  RawCsv raw = read_raw_csv(in);
  check_unique_ids(raw);
  return build_table(raw);
}

FeatureTable parse_feature_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_feature_csv(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

void write_cells(std::ostream& out, const FeatureTable& table, Eigen::Index r) {
  for (Eigen::Index c = 0; c < table.cols(); ++c) {
    out << ',';
    if (table.is_missing(r, c)) continue;
    if (table.column(c).kind == ColumnKind::kCategorical) {
      out << csv_escape(table.category(r, c));
    } else {
      out << format_double(table.values()(r, c));
    }
  }
}

void write_outcome(std::ostream& out, const std::map<std::string, SurvivalOutcome>& m,
                   const std::string& id) {
  auto it = m.find(id);
  if (it == m.end()) {
    out << ",,";
  } else {
    out << ',' << format_double(it->second.time) << ',' << (it->second.event ? 1 : 0);
  }
}

}  // namespace

void write_cohort_csv(std::ostream& out, const FeatureTable& table,
                      const std::map<std::string, SurvivalOutcome>& os,
                      const std::map<std::string, SurvivalOutcome>& dfs) {
  out << kPatientIdColumn << ",os_days,os_event,dfs_days,dfs_event";
  for (const auto& c : table.columns()) out << ',' << csv_escape(c.name);
  out << '\n';
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    const auto& id = table.patient_ids()[static_cast<std::size_t>(r)];
    out << csv_escape(id);
    write_outcome(out, os, id);
    write_outcome(out, dfs, id);
    write_cells(out, table, r);
    out << '\n';
  }
}

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  out << kPatientIdColumn;
  for (const auto& c : table.columns()) out << ',' << csv_escape(c.name);
  out << '\n';
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    out << csv_escape(table.patient_ids()[static_cast<std::size_t>(r)]);
    write_cells(out, table, r);
    out << '\n';
  }
}

// ---------------------------------------------------------------- embedding container

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const { return offset_; }

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw DataError("embedding container truncated at byte offset " +
                      std::to_string(offset_ + got) + " while reading " + what);
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t to_u32(Eigen::Index v, const char* what) {
  if (v < 0 || v > static_cast<Eigen::Index>(UINT32_MAX)) {
    throw DataError(std::string("embedding container: ") + what + " out of range");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<EmbeddingBag> parse_embedding_container(std::istream& in) {
  ByteReader rd(in);
  std::array<char, 4> magic{};
  rd.read(magic.data(), 4, "magic");
  if (magic != kMagic) throw DataError("embedding container: bad magic (expected EMB1)");

  std::vector<EmbeddingBag> bags;
  std::unordered_set<std::string> seen;
  while (!rd.at_eof()) {
    EmbeddingBag bag;
    const auto start = rd.offset();
    const std::uint32_t id_len = rd.u32("id length");
    bag.patient_id.resize(id_len);
    rd.read(bag.patient_id.data(), id_len, "patient id");
    const std::uint32_t n_tiles = rd.u32("tile count");
    const std::uint32_t dim = rd.u32("dimension");
    if (n_tiles == 0) {
      throw DataError("embedding container: patient '" + bag.patient_id + "' at byte offset " +
                      std::to_string(start) + " has no tiles");
    }
    if (dim == 0) throw DataError("embedding container: zero dimension for '" + bag.patient_id + "'");
    if (!bags.empty() && static_cast<Eigen::Index>(dim) != bags.front().dim()) {
      throw DataError("embedding container: dimension mismatch, patient '" + bag.patient_id +
                      "' has dim " + std::to_string(dim) + " but '" + bags.front().patient_id +
                      "' has dim " + std::to_string(bags.front().dim()));
    }
    if (!seen.insert(bag.patient_id).second) {
      throw DataError("embedding container: duplicate patient '" + bag.patient_id + "'");
    }
    bag.vectors.resize(n_tiles, dim);
    static_assert(sizeof(float) == 4);
    const std::size_t count = static_cast<std::size_t>(n_tiles) * dim;
    std::vector<unsigned char> buf(count * 4);
    rd.read(buf.data(), buf.size(), "tile vectors");
    for (std::size_t k = 0; k < count; ++k) {
      const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * k]) |
                                 (static_cast<std::uint32_t>(buf[4 * k + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buf[4 * k + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buf[4 * k + 3]) << 24);
      float f;
      std::memcpy(&f, &bits, 4);
      bag.vectors.data()[k] = f;
    }
    if (!bag.vectors.allFinite()) {
      throw DataError("embedding container: non-finite value for '" + bag.patient_id + "'");
    }
    unsigned char flag = 0;
    rd.read(&flag, 1, "coordinate flag");
    if (flag > 1) throw DataError("embedding container: invalid coordinate flag");
    if (flag == 1) {
      TileCoords coords(n_tiles, 2);
      for (std::uint32_t t = 0; t < n_tiles; ++t) {
        for (int a = 0; a < 2; ++a) {
          coords(t, a) = static_cast<std::int32_t>(rd.u32("tile coordinates"));
        }
      }
      bag.tile_coords = std::move(coords);
    }
    bags.push_back(std::move(bag));
  }
  return bags;
}

std::vector<EmbeddingBag> parse_embedding_container(const std::filesystem::path& path) {
  auto in = open_input(path, true);
  try {
    return parse_embedding_container(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_embedding_container(std::ostream& out, std::span<const EmbeddingBag> bags) {
  out.write(kMagic.data(), 4);
  for (const auto& bag : bags) {
    if (bag.n_tiles() == 0) throw DataError("cannot write empty bag for '" + bag.patient_id + "'");
    if (bag.dim() != bags.front().dim()) throw DataError("cannot write bags of mixed dimension");
    put_u32(out, to_u32(static_cast<Eigen::Index>(bag.patient_id.size()), "id length"));
    out.write(bag.patient_id.data(), static_cast<std::streamsize>(bag.patient_id.size()));
    put_u32(out, to_u32(bag.n_tiles(), "tile count"));
    put_u32(out, to_u32(bag.dim(), "dimension"));
    for (Eigen::Index k = 0; k < bag.vectors.size(); ++k) {
      std::uint32_t bits;
      const float f = bag.vectors.data()[k];
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
    const unsigned char flag = bag.tile_coords ? 1 : 0;
    out.put(static_cast<char>(flag));
    if (bag.tile_coords) {
      if (bag.tile_coords->rows() != bag.n_tiles()) throw DataError("tile coordinate count mismatch");
      for (Eigen::Index t = 0; t < bag.n_tiles(); ++t) {
        put_u32(out, static_cast<std::uint32_t>((*bag.tile_coords)(t, 0)));
        put_u32(out, static_cast<std::uint32_t>((*bag.tile_coords)(t, 1)));
      }
    }
  }
}

void write_embedding_container(const std::filesystem::path& path,
                               std::span<const EmbeddingBag> bags) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_embedding_container(out, bags);
}

// ---------------------------------------------------------------- alignment

namespace {

std::vector<std::string> modality_ids(const Modality& m) {
  if (m.is_table()) return m.table().patient_ids();
  std::vector<std::string> ids;
  for (const auto& b : m.bags()) ids.push_back(b.patient_id);
  return ids;
}

}  // namespace

AlignedCohort AlignedCohort::subset(std::span<const std::size_t> rows) const {
  AlignedCohort out;
  for (auto r : rows) {
    out.patient_ids.push_back(patient_ids.at(r));
    out.outcomes.push_back(outcomes.at(r));
  }
  for (const auto& m : modalities) {
    if (m.is_table()) {
      out.modalities.push_back(Modality{m.name, m.table().select_rows(rows)});
    } else {
      std::vector<EmbeddingBag> bags;
      for (auto r : rows) bags.push_back(m.bags().at(r));
      out.modalities.push_back(Modality{m.name, std::move(bags)});
    }
  }
  return out;
}

AlignedCohort align_modalities(const std::vector<Modality>& modalities,
                               const std::map<std::string, SurvivalOutcome>& outcomes) {
  if (modalities.empty()) throw PreconditionError("align_modalities: no modality given");

  std::set<std::string> keep;
  for (const auto& [id, o] : outcomes) keep.insert(id);
  std::string counts = "outcomes=" + std::to_string(outcomes.size());
  for (const auto& m : modalities) {
    auto ids = modality_ids(m);
    counts += ", " + m.name + "=" + std::to_string(ids.size());
    std::set<std::string> s(ids.begin(), ids.end());
    std::set<std::string> next;
    std::set_intersection(keep.begin(), keep.end(), s.begin(), s.end(),
                          std::inserter(next, next.end()));
    keep = std::move(next);
  }
  if (keep.empty()) {
    throw DataError("no patient is present in every modality with complete outcomes (" + counts + ")");
  }

  AlignedCohort out;
  out.patient_ids.assign(keep.begin(), keep.end());  // std::set order is lexicographic
  for (const auto& id : out.patient_ids) out.outcomes.push_back(outcomes.at(id));

  for (const auto& m : modalities) {
    auto ids = modality_ids(m);
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
    std::vector<std::size_t> rows;
    rows.reserve(out.patient_ids.size());
    for (const auto& id : out.patient_ids) rows.push_back(pos.at(id));
    if (m.is_table()) {
      out.modalities.push_back(Modality{m.name, m.table().select_rows(rows)});
    } else {
      std::vector<EmbeddingBag> bags;
      for (auto r : rows) bags.push_back(m.bags()[r]);
      out.modalities.push_back(Modality{m.name, std::move(bags)});
    }
  }
  return out;
}

}  // namespace mmem
