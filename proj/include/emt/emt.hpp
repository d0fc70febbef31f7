#pragma once

#include "emt/analysis.hpp"
#include "emt/annotations.hpp"
#include "emt/autograd.hpp"
#include "emt/checkpoint.hpp"
#include "emt/cli.hpp"
#include "emt/dataset.hpp"
#include "emt/evaluation.hpp"
#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/synth.hpp"
#include "emt/tensor.hpp"
#include "emt/text_pipeline.hpp"
#include "emt/training.hpp"
#include "emt/util.hpp"
#include "emt/visual_features.hpp"
