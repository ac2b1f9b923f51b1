#pragma once

#include "tltrack/errors.hpp"
#include "tltrack/evaluation.hpp"
#include "tltrack/exports.hpp"
#include "tltrack/feature_store.hpp"
#include "tltrack/gaussian_mixture.hpp"
#include "tltrack/nn_core.hpp"
#include "tltrack/planar_embedding.hpp"
#include "tltrack/pretext_model.hpp"
#include "tltrack/synthetic_data.hpp"
#include "tltrack/trajectory_model.hpp"
