#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace mmem {

// Follow-up of one patient for one endpoint. Time is in days.
struct SurvivalOutcome {
  double time = 0.0;
  bool event = false;

  friend bool operator==(const SurvivalOutcome&, const SurvivalOutcome&) = default;
};

enum class Endpoint { kOs, kDfs };

std::string_view to_string(Endpoint e);
Endpoint parse_endpoint(std::string_view s);

std::size_t count_events(std::span<const SurvivalOutcome> outcomes);

enum class ColumnKind {
  kNumeric,
  kCategorical,
  // 0/1 column produced by one-hot encoding.
  kIndicator,
};

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  // Categorical columns store the level index (into `levels`, sorted
  // lexicographically) as the cell value.
  std::vector<std::string> levels;
};

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Patient x feature matrix with a missingness mask. Immutable once built;
// every transformation returns a new table.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(std::vector<std::string> patient_ids, std::vector<Column> columns,
               Eigen::MatrixXd values, MissingMask missing);

  // All-numeric table without missing cells.
  static FeatureTable numeric(std::vector<std::string> patient_ids,
                              std::vector<std::string> column_names,
                              Eigen::MatrixXd values);

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

  const std::vector<std::string>& patient_ids() const { return patient_ids_; }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(Eigen::Index c) const { return columns_[static_cast<std::size_t>(c)]; }
  const Eigen::MatrixXd& values() const { return values_; }
  const MissingMask& missing() const { return missing_; }

  std::vector<std::string> column_names() const;
  std::optional<Eigen::Index> column_index(std::string_view name) const;
  bool is_missing(Eigen::Index r, Eigen::Index c) const { return missing_(r, c); }
  // Level string of a categorical cell.
  const std::string& category(Eigen::Index r, Eigen::Index c) const;

  FeatureTable select_rows(std::span<const std::size_t> rows) const;
  FeatureTable select_columns(std::span<const Eigen::Index> cols) const;
  // Columns by name, in the given order; throws DataError on unknown names.
  FeatureTable select_columns(std::span<const std::string> names) const;
  // Dense matrix of the named columns.
  Eigen::MatrixXd matrix(std::span<const std::string> names) const;

 private:
  std::vector<std::string> patient_ids_;
  std::vector<Column> columns_;
  Eigen::MatrixXd values_;
  MissingMask missing_;
};

using TileVectors = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TileCoords = Eigen::Matrix<std::int32_t, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Variable-size set of tile embeddings for one patient.
struct EmbeddingBag {
  std::string patient_id;
  TileVectors vectors;  // n_tiles x dim
  std::optional<TileCoords> tile_coords;

  Eigen::Index n_tiles() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

// patient x modality matrix of risk scores r_{i,m}.
struct RiskScoreTable {
  std::vector<std::string> patient_ids;
  std::vector<std::string> modality_names;
  Eigen::MatrixXd scores;

  void validate() const;
};

enum class OutcomePolicy {
  // Drop a patient whose follow-up is incomplete for either endpoint.
  kRequireBothEndpoints,
  kSelectedEndpointOnly,
};

struct CohortFile {
  FeatureTable features;
  std::map<std::string, SurvivalOutcome> outcomes;
};

inline constexpr std::string_view kPatientIdColumn = "patient_id";

CohortFile parse_cohort_csv(std::istream& in, Endpoint endpoint,
                            OutcomePolicy policy = OutcomePolicy::kRequireBothEndpoints);
CohortFile parse_cohort_csv(const std::filesystem::path& path, Endpoint endpoint,
                            OutcomePolicy policy = OutcomePolicy::kRequireBothEndpoints);

// Modality table without outcome columns (reserved columns, if present, are
// skipped).
FeatureTable parse_feature_csv(std::istream& in);
FeatureTable parse_feature_csv(const std::filesystem::path& path);

// Both outcome maps are keyed by patient id; patients absent from a map get
// empty outcome cells.
void write_cohort_csv(std::ostream& out, const FeatureTable& table,
                      const std::map<std::string, SurvivalOutcome>& os,
                      const std::map<std::string, SurvivalOutcome>& dfs);
void write_feature_csv(std::ostream& out, const FeatureTable& table);

std::vector<EmbeddingBag> parse_embedding_container(std::istream& in);
std::vector<EmbeddingBag> parse_embedding_container(const std::filesystem::path& path);
void write_embedding_container(std::ostream& out, std::span<const EmbeddingBag> bags);
void write_embedding_container(const std::filesystem::path& path,
                               std::span<const EmbeddingBag> bags);

using ModalityData = std::variant<FeatureTable, std::vector<EmbeddingBag>>;

struct Modality {
  std::string name;
  ModalityData data;

  bool is_table() const { return std::holds_alternative<FeatureTable>(data); }
  const FeatureTable& table() const { return std::get<FeatureTable>(data); }
  const std::vector<EmbeddingBag>& bags() const {
    return std::get<std::vector<EmbeddingBag>>(data);
  }
};

// Every structure reordered to one lexicographic patient order.
struct AlignedCohort {
  std::vector<std::string> patient_ids;
  std::vector<SurvivalOutcome> outcomes;
  std::vector<Modality> modalities;

  std::size_t size() const { return patient_ids.size(); }
  // Restriction to a subset of rows (indices into patient_ids).
  AlignedCohort subset(std::span<const std::size_t> rows) const;
};

AlignedCohort align_modalities(const std::vector<Modality>& modalities,
                               const std::map<std::string, SurvivalOutcome>& outcomes);

}  // namespace mmem
