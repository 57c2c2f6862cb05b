#pragma once

// Umbrella header.

#include "chronoweft/config.hpp"
#include "chronoweft/dynsys.hpp"
#include "chronoweft/error.hpp"
#include "chronoweft/harness.hpp"
#include "chronoweft/hyperopt.hpp"
#include "chronoweft/io.hpp"
#include "chronoweft/manifest.hpp"
#include "chronoweft/metrics.hpp"
#include "chronoweft/observe.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/reservoir.hpp"
#include "chronoweft/tensor.hpp"
#include "chronoweft/transformer.hpp"
#include "chronoweft/types.hpp"
