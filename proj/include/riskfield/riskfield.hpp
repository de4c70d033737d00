#pragma once

#include "riskfield/course.hpp"
#include "riskfield/data.hpp"
#include "riskfield/dynamics.hpp"
#include "riskfield/error.hpp"
#include "riskfield/eval.hpp"
#include "riskfield/io.hpp"
#include "riskfield/mle.hpp"
#include "riskfield/parallel.hpp"
#include "riskfield/policy.hpp"
#include "riskfield/risk_model.hpp"
#include "riskfield/rng.hpp"
#include "riskfield/scenarios.hpp"
#include "riskfield/svg.hpp"

namespace riskfield {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace riskfield
