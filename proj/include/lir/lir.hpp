#pragma once

// Late-interaction cross-modal retrieval over precomputed token embeddings.

#include "lir/datagen.hpp"
#include "lir/errors.hpp"
#include "lir/eval.hpp"
#include "lir/flops.hpp"
#include "lir/index.hpp"
#include "lir/interaction.hpp"
#include "lir/io.hpp"
#include "lir/losses.hpp"
#include "lir/numerics.hpp"
#include "lir/train.hpp"
