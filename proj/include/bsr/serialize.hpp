#pragma once

// JSON views of the result types, shared by trace files and report files.

#include <json.hpp>

#include "bsr/likelihood.hpp"
#include "bsr/score.hpp"

namespace bsr {

nlohmann::json to_json(const ParamVector& p);
ParamVector param_vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScoreBreakdown& s);
ScoreBreakdown score_breakdown_from_json(const nlohmann::json& j);

// Non-finite values are written as the strings "inf", "-inf" and "nan".
nlohmann::json real_to_json(double v);
double real_from_json(const nlohmann::json& j);

}  // namespace bsr
