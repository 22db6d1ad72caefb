// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "avsv/blstm.hpp"
#include "avsv/errors.hpp"
#include "avsv/eval.hpp"
#include "avsv/features_io.hpp"
#include "avsv/graph.hpp"
#include "avsv/jca.hpp"
#include "avsv/matrix.hpp"
#include "avsv/model.hpp"
#include "avsv/pooling.hpp"
#include "avsv/rng.hpp"
#include "avsv/training.hpp"
