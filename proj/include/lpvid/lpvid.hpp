// SPDX-License-Identifier: Apache-2.0
#pragma once

// Joint estimation of an affine LPV state-space model, a neural scheduling
// map and a sub-space encoder from input-output data, trained by a truncated
// batch prediction-error loss.

#include "lpvid/adam.hpp"
#include "lpvid/autodiff.hpp"
#include "lpvid/benchmark.hpp"
#include "lpvid/config.hpp"
#include "lpvid/dataset.hpp"
#include "lpvid/dataset_io.hpp"
#include "lpvid/encoder.hpp"
#include "lpvid/errors.hpp"
#include "lpvid/experiment.hpp"
#include "lpvid/loss.hpp"
#include "lpvid/lpv_model.hpp"
#include "lpvid/metrics.hpp"
#include "lpvid/mlp.hpp"
#include "lpvid/params.hpp"
#include "lpvid/rng.hpp"
#include "lpvid/serialize.hpp"
#include "lpvid/text.hpp"
#include "lpvid/trainer.hpp"
