#pragma once

#include <json.hpp>

#include "mmem/coxph.hpp"
#include "mmem/cvharness.hpp"
#include "mmem/deepcox.hpp"
#include "mmem/ensemble.hpp"
#include "mmem/featsel.hpp"
#include "mmem/preprocess.hpp"
#include "mmem/wsiprep.hpp"

// JSON forms of the toolkit's result types (found by nlohmann::json via ADL).
namespace mmem {

void to_json(nlohmann::json& j, const DeepCoxConfig& c);
void from_json(const nlohmann::json& j, DeepCoxConfig& c);

void to_json(nlohmann::json& j, const CoxModel& m);
void from_json(const nlohmann::json& j, CoxModel& m);

void to_json(nlohmann::json& j, const PreprocessReport& r);
void from_json(const nlohmann::json& j, PreprocessReport& r);

void to_json(nlohmann::json& j, const SelectionTrace& t);

void to_json(nlohmann::json& j, const TileSet& t);
void from_json(const nlohmann::json& j, TileSet& t);

void to_json(nlohmann::json& j, const ModalityWeights& w);
void from_json(const nlohmann::json& j, ModalityWeights& w);

void to_json(nlohmann::json& j, const FoldAssignment& a);
void to_json(nlohmann::json& j, const ModalityFoldResult& r);
void to_json(nlohmann::json& j, const FoldResult& r);

}  // namespace mmem
