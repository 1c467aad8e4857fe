#pragma once

// Convenience umbrella for the whole library.

#include "timeformer/attention.hpp"
#include "timeformer/checkpoint.hpp"
#include "timeformer/config.hpp"
#include "timeformer/data.hpp"
#include "timeformer/errors.hpp"
#include "timeformer/model.hpp"
#include "timeformer/ops.hpp"
#include "timeformer/optim.hpp"
#include "timeformer/report.hpp"
#include "timeformer/rng.hpp"
#include "timeformer/tensor.hpp"
#include "timeformer/train_eval.hpp"
