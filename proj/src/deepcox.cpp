#include "mmem/deepcox.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "mmem/attention.hpp"
#include "mmem/error.hpp"
#include "mmem/metrics.hpp"
#include "mmem/serialization.hpp"

namespace mmem {

void DeepCoxConfig::validate() const {
  if (proj_dim < 1 || n_heads < 1 || proj_dim % n_heads != 0) {
    throw ConfigError("deep: proj_dim must be a positive multiple of n_heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("deep: dropout must be in [0, 1)");
  if (n_landmarks < 1) throw ConfigError("deep: n_landmarks must be >= 1");
  if (pinv_iters < 0) throw ConfigError("deep: pinv_iters must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("deep: lr must be >= 0");
  if (epochs < 1) throw ConfigError("deep: epochs must be >= 1");
  if (plateau_patience < 1) throw ConfigError("deep: plateau_patience must be >= 1");
  if (!(plateau_gamma > 0.0 && plateau_gamma <= 1.0)) {
    throw ConfigError("deep: plateau_gamma must be in (0, 1]");
  }
  if (train_bag_cap < 1) throw ConfigError("deep: train_bag_cap must be >= 1");
}

namespace {

struct SlotShape {
  Eigen::Index rows, cols, fan_in;
};

std::vector<SlotShape> slot_shapes(Eigen::Index d, Eigen::Index p) {
  return {{d, p, d}, {1, p, d}, {p, p, p}, {p, p, p}, {p, p, p},
          {p, p, p}, {1, p, p}, {p, 1, p}, {1, 1, p}};
}

Eigen::MatrixXd to_double(const TileVectors& v) { return v.cast<double>(); }

}  // namespace

DeepCoxModel::DeepCoxModel(Eigen::Index input_dim, const DeepCoxConfig& config)
    : input_dim_(input_dim), config_(config) {
  config.validate();
  if (input_dim < 1) throw PreconditionError("deep: input dimension must be >= 1");
  Rng rng(derive_seed(config.seed, {0x1417}));
  for (const auto& s : slot_shapes(input_dim, config.proj_dim)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    Eigen::MatrixXd m(s.rows, s.cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    params_.push_back(std::move(m));
  }
}

DeepCoxModel DeepCoxModel::from_parameters(Eigen::Index input_dim, const DeepCoxConfig& config,
                                           std::vector<Eigen::MatrixXd> params) {
  config.validate();
  const auto shapes = slot_shapes(input_dim, config.proj_dim);
  if (params.size() != shapes.size()) throw DataError("deep: wrong number of parameter arrays");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].rows() != shapes[i].rows || params[i].cols() != shapes[i].cols) {
      throw DataError(std::string("deep: parameter '") + slot_name(i) + "' has the wrong shape");
    }
    if (!params[i].allFinite()) {
      throw DataError(std::string("deep: parameter '") + slot_name(i) + "' is not finite");
    }
  }
  DeepCoxModel m;
  m.input_dim_ = input_dim;
  m.config_ = config;
  m.params_ = std::move(params);
  return m;
}

const char* DeepCoxModel::slot_name(std::size_t slot) {
  static constexpr const char* kNames[] = {"proj.weight", "proj.bias",  "attn.query", "attn.key",
                                           "attn.value",  "attn.out.weight", "attn.out.bias",
                                           "head.weight", "head.bias"};
  return slot < kNumSlots ? kNames[slot] : "?";
}

ad::Var DeepCoxModel::build(ad::Tape& tape, const Eigen::MatrixXd& tiles, Mode mode, Rng* rng) const {
  if (tiles.cols() != input_dim_) {
    throw PreconditionError("deep: bag dimension " + std::to_string(tiles.cols()) +
                            " differs from model input dimension " + std::to_string(input_dim_));
  }
  if (tiles.rows() < 1) throw PreconditionError("deep: empty bag");
  std::vector<ad::Var> p;
  for (std::size_t s = 0; s < kNumSlots; ++s) p.push_back(tape.parameter(s, params_[s]));

  ad::Var h = ad::relu(ad::add_row(ad::matmul(tape.constant(tiles), p[kProjW]), p[kProjB]));
  if (mode == Mode::kTrain && config_.dropout > 0.0) {
    if (rng == nullptr) throw PreconditionError("deep: training forward needs an rng");
    const double keep = 1.0 - config_.dropout;
    Eigen::MatrixXd mask(h.rows(), h.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
      for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
    h = ad::mul_const(h, mask);
  }

  if (config_.use_attention) {
    ad::Var q = ad::matmul(h, p[kQueryW]);
    ad::Var k = ad::matmul(h, p[kKeyW]);
    ad::Var v = ad::matmul(h, p[kValueW]);
    const Eigen::Index dh = config_.proj_dim / config_.n_heads;
    std::vector<ad::Var> heads;
    for (int i = 0; i < config_.n_heads; ++i) {
      heads.push_back(nystrom_attention(ad::slice_cols(q, i * dh, dh), ad::slice_cols(k, i * dh, dh),
                                        ad::slice_cols(v, i * dh, dh), config_.n_landmarks,
                                        config_.pinv_iters));
    }
    h = ad::add_row(ad::matmul(ad::hconcat(heads), p[kOutW]), p[kOutB]);
  }
  return ad::add(ad::matmul(ad::mean_rows(h), p[kHeadW]), p[kHeadB]);
}

double forward_bag(const DeepCoxModel& model, const EmbeddingBag& bag, Mode mode, Rng* rng) {
  ad::Tape tape;
  return model.build(tape, to_double(bag.vectors), mode, rng).value()(0, 0);
}

Eigen::VectorXd predict_bags(const DeepCoxModel& model, std::span<const EmbeddingBag> bags) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(bags.size()));
  for (std::size_t i = 0; i < bags.size(); ++i) r(static_cast<Eigen::Index>(i)) = forward_bag(model, bags[i]);
  return r;
}

// ------------------------------------------------------------------ loss

namespace {

void check_loss_inputs(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes) {
  if (risks.size() != outcomes.size()) throw PreconditionError("cox_nll: risk/outcome count mismatch");
  if (count_events(outcomes) == 0) throw PreconditionError("cox_nll: no events");
}

// Patients sorted by descending time; each group of equal times is contiguous.
std::vector<std::size_t> descending_time_order(std::span<const SurvivalOutcome> outcomes) {
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return outcomes[a].time > outcomes[b].time; });
  return order;
}

}  // namespace

double cox_nll(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes) {
  check_loss_inputs(risks, outcomes);
  const double shift = *std::max_element(risks.begin(), risks.end());
  const auto order = descending_time_order(outcomes);
  double sum_exp = 0.0, loglik = 0.0;
  std::size_t d = 0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t e = g;
    const double t = outcomes[order[g]].time;
    while (e < order.size() && outcomes[order[e]].time == t) sum_exp += std::exp(risks[order[e++]] - shift);
    const double log_s = std::log(sum_exp) + shift;
    for (std::size_t i = g; i < e; ++i) {
      if (!outcomes[order[i]].event) continue;
      loglik += risks[order[i]] - log_s;
      ++d;
    }
    g = e;
  }
  return -loglik / static_cast<double>(d);
}

Eigen::VectorXd cox_nll_gradient(std::span<const double> risks, std::span<const SurvivalOutcome> outcomes) {
  check_loss_inputs(risks, outcomes);
  const double shift = *std::max_element(risks.begin(), risks.end());
  const auto order = descending_time_order(outcomes);
  const std::size_t n = order.size();
  // Risk-set sums per time group, walking from the latest time backwards.
  std::vector<double> group_s(n, 0.0);
  std::vector<std::size_t> group_events(n, 0);
  std::vector<std::size_t> group_start;
  double sum_exp = 0.0;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    const double t = outcomes[order[g]].time;
    while (e < n && outcomes[order[e]].time == t) sum_exp += std::exp(risks[order[e++]] - shift);
    group_start.push_back(g);
    group_s[group_start.size() - 1] = sum_exp;
    for (std::size_t i = g; i < e; ++i) group_events[group_start.size() - 1] += outcomes[order[i]].event;
    g = e;
  }
  // Patient j sits in the risk set of every event time <= t_j, i.e. its own
  // group and all later groups in this descending order.
  const std::size_t n_groups = group_start.size();
  std::vector<double> tail(n_groups + 1, 0.0);
  for (std::size_t k = n_groups; k-- > 0;) {
    tail[k] = tail[k + 1] + static_cast<double>(group_events[k]) / group_s[k];
  }
  Eigen::VectorXd grad(static_cast<Eigen::Index>(n));
  double d = 0.0;
  for (const auto& o : outcomes) d += o.event ? 1.0 : 0.0;
  for (std::size_t k = 0; k < n_groups; ++k) {
    const std::size_t end = k + 1 < n_groups ? group_start[k + 1] : n;
    for (std::size_t i = group_start[k]; i < end; ++i) {
      const std::size_t j = order[i];
      const double dl = (outcomes[j].event ? 1.0 : 0.0) - std::exp(risks[j] - shift) * tail[k];
      grad(static_cast<Eigen::Index>(j)) = -dl / d;
    }
  }
  return grad;
}

double cox_nll_with_gradients(const DeepCoxModel& model, std::span<const EmbeddingBag> bags,
                              std::span<const SurvivalOutcome> outcomes,
                              std::vector<Eigen::MatrixXd>* grads) {
  std::vector<Eigen::MatrixXd> tiles;
  for (const auto& b : bags) tiles.push_back(to_double(b.vectors));
  std::vector<ad::Tape> tapes(bags.size());
  std::vector<ad::Var> outs;
  std::vector<double> risks;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    outs.push_back(model.build(tapes[i], tiles[i], Mode::kEval, nullptr));
    risks.push_back(outs.back().value()(0, 0));
  }
  const double loss = cox_nll(risks, outcomes);
  if (grads != nullptr) {
    const Eigen::VectorXd g = cox_nll_gradient(risks, outcomes);
    grads->clear();
    for (const auto& p : model.parameters()) grads->push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    for (std::size_t i = 0; i < bags.size(); ++i) {
      tapes[i].backward(outs[i], Eigen::MatrixXd::Constant(1, 1, g(static_cast<Eigen::Index>(i))));
      tapes[i].accumulate_parameter_grads(*grads);
    }
  }
  return loss;
}

// ------------------------------------------------------------------ training

namespace {

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Eigen::MatrixXd> m, v;
  int t = 0;

  explicit Adam(const std::vector<Eigen::MatrixXd>& params) {
    for (const auto& p : params) {
      m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }

  void step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseAbs2();
      params[i].array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

Eigen::MatrixXd subsample_tiles(const Eigen::MatrixXd& tiles, Eigen::Index cap, Rng& rng) {
  if (tiles.rows() <= cap) return tiles;
  const auto keep = rng.sample_without_replacement(static_cast<std::size_t>(tiles.rows()),
                                                   static_cast<std::size_t>(cap));
  Eigen::MatrixXd out(cap, tiles.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = tiles.row(static_cast<Eigen::Index>(keep[i]));
  }
  return out;
}

double eval_loss(const DeepCoxModel& model, const std::vector<Eigen::MatrixXd>& tiles,
                 std::span<const SurvivalOutcome> outcomes, std::vector<double>* risks_out) {
  std::vector<double> risks;
  for (const auto& t : tiles) {
    ad::Tape tape;
    risks.push_back(model.build(tape, t, Mode::kEval, nullptr).value()(0, 0));
  }
  const double loss = cox_nll(risks, outcomes);
  if (risks_out != nullptr) *risks_out = std::move(risks);
  return loss;
}

}  // namespace

DeepCoxTrainResult train_deep_cox(std::span<const EmbeddingBag> bags,
                                  std::span<const SurvivalOutcome> outcomes,
                                  const DeepCoxConfig& config,
                                  std::span<const EmbeddingBag> val_bags,
                                  std::span<const SurvivalOutcome> val_outcomes) {
  config.validate();
  if (bags.size() != outcomes.size() || val_bags.size() != val_outcomes.size()) {
    throw PreconditionError("train_deep_cox: bag/outcome count mismatch");
  }
  if (count_events(outcomes) < 2) throw PreconditionError("train_deep_cox: need at least 2 training events");
  if (count_events(val_outcomes) < 1) throw PreconditionError("train_deep_cox: validation set has no events");
  const Eigen::Index dim = bags.front().dim();

  std::vector<Eigen::MatrixXd> train_tiles, val_tiles;
  for (const auto& b : bags) {
    if (b.dim() != dim) throw PreconditionError("train_deep_cox: bags differ in dimension");
    train_tiles.push_back(to_double(b.vectors));
  }
  for (const auto& b : val_bags) val_tiles.push_back(to_double(b.vectors));

  DeepCoxModel model(dim, config);
  Adam adam(model.parameters());
  double lr = config.lr;
  double plateau_best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  DeepCoxTrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_val_risks;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Tile subsample and dropout masks are drawn from a per-(epoch, bag)
    // stream so the forward pass can be replayed for the backward pass.
    auto bag_rng = [&](std::size_t i) {
      return Rng(derive_seed(config.seed, {0xB46, static_cast<std::uint64_t>(epoch), i}));
    };
    std::vector<double> risks(bags.size());
    for (std::size_t i = 0; i < bags.size(); ++i) {
      Rng rng = bag_rng(i);
      const Eigen::MatrixXd tiles = subsample_tiles(train_tiles[i], config.train_bag_cap, rng);
      ad::Tape tape;
      risks[i] = model.build(tape, tiles, Mode::kTrain, &rng).value()(0, 0);
    }
    const double loss = cox_nll(risks, outcomes);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_deep_cox: non-finite training loss at epoch " + std::to_string(epoch));
    }
    const Eigen::VectorXd g = cox_nll_gradient(risks, outcomes);
    std::vector<Eigen::MatrixXd> grads;
    for (const auto& p : model.parameters()) grads.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    for (std::size_t i = 0; i < bags.size(); ++i) {
      Rng rng = bag_rng(i);
      const Eigen::MatrixXd tiles = subsample_tiles(train_tiles[i], config.train_bag_cap, rng);
      ad::Tape tape;
      ad::Var out = model.build(tape, tiles, Mode::kTrain, &rng);
      tape.backward(out, Eigen::MatrixXd::Constant(1, 1, g(static_cast<Eigen::Index>(i))));
      tape.accumulate_parameter_grads(grads);
    }
    adam.step(model.parameters(), grads, lr);

    std::vector<double> val_risks;
    const double val_loss = eval_loss(model, val_tiles, val_outcomes, &val_risks);
    if (!std::isfinite(val_loss)) {
      throw NumericalError("train_deep_cox: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, loss, val_loss, lr});

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model;
      best_val_risks = val_risks;
    }
    if (val_loss < plateau_best) {
      plateau_best = val_loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.plateau_patience) {
      lr *= config.plateau_gamma;
      bad_epochs = 0;
    }
  }

  const auto counts = concordance_counts(best_val_risks, val_outcomes);
  result.val_cindex = counts.comparable > 0 ? counts.cindex() : std::numeric_limits<double>::quiet_NaN();
  return result;
}

// ------------------------------------------------------------------ gradient check

FiniteDiffResult finite_diff_check(const DeepCoxModel& model, std::span<const EmbeddingBag> bags,
                                   std::span<const SurvivalOutcome> outcomes, double h) {
  std::vector<Eigen::MatrixXd> analytic;
  cox_nll_with_gradients(model, bags, outcomes, &analytic);
  DeepCoxModel probe = model;
  FiniteDiffResult res;
  for (std::size_t s = 0; s < probe.parameters().size(); ++s) {
    Eigen::MatrixXd& p = probe.parameters()[s];
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double orig = p(i, j);
        p(i, j) = orig + h;
        const double up = cox_nll_with_gradients(probe, bags, outcomes, nullptr);
        p(i, j) = orig - h;
        const double down = cox_nll_with_gradients(probe, bags, outcomes, nullptr);
        p(i, j) = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[s](i, j);
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        ++res.n_checked;
        if (err > res.max_rel_error) {
          res.max_rel_error = err;
          res.worst_parameter = std::string(DeepCoxModel::slot_name(s)) + "[" + std::to_string(i) + "," +
                                std::to_string(j) + "]";
        }
      }
    }
  }
  return res;
}

// ------------------------------------------------------------------ checkpoint

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'X'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw DataError("checkpoint " + path.string() + ": truncated");
  }
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const DeepCoxModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (std::size_t s = 0; s < model.parameters().size(); ++s) {
    const std::string name = DeepCoxModel::slot_name(s);
    const auto& p = model.parameters()[s];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.cols()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p(i, j)));
    }
  }
  if (!out) throw DataError("error while writing checkpoint " + path.string());

  nlohmann::json meta;
  meta["format"] = "mmem-deepcox/1";
  meta["input_dim"] = model.input_dim();
  meta["config"] = model.config();
  std::ofstream side(sidecar(path));
  side << meta.dump(2) << '\n';
  if (!side) throw DataError("cannot write " + sidecar(path).string());
}

DeepCoxModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream side(sidecar(path));
  if (!side) throw DataError("missing checkpoint config " + sidecar(path).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint config " + sidecar(path).string() + ": " + e.what());
  }
  const auto input_dim = meta.at("input_dim").get<Eigen::Index>();
  const auto config = meta.at("config").get<DeepCoxConfig>();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint " + path.string() + ": bad magic");
  }
  if (get_le<std::uint32_t>(in, path) != kVersion) throw DataError("checkpoint " + path.string() + ": unknown version");
  const auto count = get_le<std::uint32_t>(in, path);
  std::vector<Eigen::MatrixXd> params;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto len = get_le<std::uint32_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw DataError("checkpoint " + path.string() + ": truncated name");
    if (name != DeepCoxModel::slot_name(a)) {
      throw DataError("checkpoint " + path.string() + ": expected array '" + DeepCoxModel::slot_name(a) +
                      "', found '" + name + "'");
    }
    const auto rows = get_le<std::uint32_t>(in, path);
    const auto cols = get_le<std::uint32_t>(in, path);
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
    }
    params.push_back(std::move(m));
  }
  return DeepCoxModel::from_parameters(input_dim, config, std::move(params));
}

}  // namespace mmem
