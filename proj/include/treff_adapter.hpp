#pragma once

#include "treff/adam.hpp"
#include "treff/baselines.hpp"
#include "treff/calm.hpp"
#include "treff/dataset_io.hpp"
#include "treff/embedding_store.hpp"
#include "treff/episodes.hpp"
#include "treff/error.hpp"
#include "treff/matrix.hpp"
#include "treff/metric_core.hpp"
#include "treff/rng.hpp"
#include "treff/synthgen.hpp"
#include "treff/treff.hpp"
#include "treff/zero_shot.hpp"
