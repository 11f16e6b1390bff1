#pragma once

#include "xvqa/tensor.hpp"
#include "xvqa/random.hpp"
#include "xvqa/layers.hpp"
#include "xvqa/lstm.hpp"
#include "xvqa/optim.hpp"
#include "xvqa/gradcheck.hpp"
#include "xvqa/checkpoint.hpp"
#include "xvqa/text.hpp"
#include "xvqa/metrics.hpp"
#include "xvqa/dataset.hpp"
#include "xvqa/explainers.hpp"
#include "xvqa/reasoner.hpp"
#include "xvqa/gradcheck_suite.hpp"
#include "xvqa/synthworld.hpp"
#include "xvqa/pipeline.hpp"
#include "xvqa/analysis.hpp"
#include "xvqa/config.hpp"
