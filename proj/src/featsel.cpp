#include "mmem/featsel.hpp"

#include <algorithm>

#include "mmem/error.hpp"

namespace mmem {

std::string_view to_string(StopReason r) {
  return r == StopReason::kMaxFeatures ? "max-features" : "no-improvement";
}

std::pair<SelectionTrace, CoxModel> forward_select(const FeatureTable& table,
                                                   std::span<const SurvivalOutcome> outcomes,
                                                   std::span<const std::string> ranked_candidates,
                                                   std::span<const SubSplit> splits,
                                                   const ForwardSelectOptions& options) {
  if (ranked_candidates.empty()) throw PreconditionError("forward_select: no candidate features");
  if (options.max_features < 1) throw PreconditionError("forward_select: max_features must be >= 1");
  if (static_cast<std::size_t>(table.rows()) != outcomes.size()) {
    throw PreconditionError("forward_select: row/outcome count mismatch");
  }

  SelectionTrace trace;
  std::vector<std::string> remaining;
  std::vector<std::string> selected;

  auto score = [&](std::vector<std::string> names) {
    return mean_validation_cindex(table.matrix(names), outcomes, splits, options.cox);
  };

  // Seed with the best-ranked candidate whose model can be fit at all.
  std::size_t k = 0;
  for (; k < ranked_candidates.size(); ++k) {
    auto s = score({ranked_candidates[k]});
    if (s) {
      selected.push_back(ranked_candidates[k]);
      trace.iterations.push_back({ranked_candidates[k], *s});
      trace.best_val_cindex = *s;
      break;
    }
    trace.warnings.push_back("skipped '" + ranked_candidates[k] + "': fit failed");
  }
  if (selected.empty()) throw ConvergenceError("forward_select: no candidate could be fit");
  remaining.assign(ranked_candidates.begin() + static_cast<std::ptrdiff_t>(k) + 1,
                   ranked_candidates.end());

  trace.stop_reason = StopReason::kNoImprovement;
  while (true) {
    if (static_cast<int>(selected.size()) >= options.max_features) {
      trace.stop_reason = StopReason::kMaxFeatures;
      break;
    }
    std::optional<std::size_t> best;
    double best_score = trace.best_val_cindex;
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      auto names = selected;
      names.push_back(remaining[c]);
      auto s = score(std::move(names));
      if (!s) {
        trace.warnings.push_back("skipped '" + remaining[c] + "' at step " +
                                 std::to_string(selected.size() + 1) + ": fit failed");
        continue;
      }
      // Strict comparison keeps the earliest-ranked candidate on ties.
      if (*s > best_score) {
        best_score = *s;
        best = c;
      }
    }
    if (!best) break;
    selected.push_back(remaining[*best]);
    trace.iterations.push_back({remaining[*best], best_score});
    trace.best_val_cindex = best_score;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(*best));
  }

  trace.optimal_set = selected;
  CoxModel model = fit_cox(table.matrix(selected), outcomes, selected, options.cox);
  return {std::move(trace), std::move(model)};
}

}  // namespace mmem
