// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "edmtt/aggregate.hpp"
#include "edmtt/checkpoint.hpp"
#include "edmtt/config.hpp"
#include "edmtt/error.hpp"
#include "edmtt/eval.hpp"
#include "edmtt/features.hpp"
#include "edmtt/loss.hpp"
#include "edmtt/model.hpp"
#include "edmtt/optimizer.hpp"
#include "edmtt/parameters.hpp"
#include "edmtt/random.hpp"
#include "edmtt/sampler.hpp"
#include "edmtt/synthdata.hpp"
#include "edmtt/train.hpp"
