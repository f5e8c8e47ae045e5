#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmem/coxph.hpp"
#include "mmem/preprocess.hpp"

namespace mmem {

enum class StopReason { kNoImprovement, kMaxFeatures };

std::string_view to_string(StopReason r);

struct SelectionStep {
  std::string added_feature;
  double mean_val_cindex = 0.0;
};

struct SelectionTrace {
  std::vector<SelectionStep> iterations;  // accepted steps only
  std::vector<std::string> optimal_set;
  double best_val_cindex = 0.0;
  StopReason stop_reason = StopReason::kNoImprovement;
  std::vector<std::string> warnings;  // candidates skipped after failed fits
};

struct ForwardSelectOptions {
  int max_features = 20;
  CoxFitOptions cox;
};

// Greedy forward selection scored by the mean sub-validation C-index over
// `splits`. Starts from the top-ranked candidate; a candidate joins only on
// strict improvement; argmax ties go to the earlier-ranked candidate. The
// returned model is refit on all rows with the optimal set.
std::pair<SelectionTrace, CoxModel> forward_select(const FeatureTable& table,
                                                   std::span<const SurvivalOutcome> outcomes,
                                                   std::span<const std::string> ranked_candidates,
                                                   std::span<const SubSplit> splits,
                                                   const ForwardSelectOptions& options = {});

}  // namespace mmem
