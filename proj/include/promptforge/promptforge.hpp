#pragma once

#include "promptforge/error.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/log.hpp"
#include "promptforge/matching.hpp"
#include "promptforge/patching.hpp"
#include "promptforge/pipeline.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/segmenter.hpp"
#include "promptforge/spatial_sampling.hpp"
#include "promptforge/tensor_io.hpp"
