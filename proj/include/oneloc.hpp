#pragma once

#include "oneloc/config.hpp"
#include "oneloc/descriptor_map.hpp"
#include "oneloc/error.hpp"
#include "oneloc/eval.hpp"
#include "oneloc/geometry.hpp"
#include "oneloc/io.hpp"
#include "oneloc/mlp.hpp"
#include "oneloc/pipeline.hpp"
#include "oneloc/rng.hpp"
#include "oneloc/sampling.hpp"
#include "oneloc/synth.hpp"
#include "oneloc/training.hpp"
#include "oneloc/types.hpp"
#include "oneloc/voting.hpp"
