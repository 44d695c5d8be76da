#pragma once

#include "effipose/tensor.hpp"
#include "effipose/autograd.hpp"
#include "effipose/kernels.hpp"
#include "effipose/ops.hpp"
#include "effipose/graph.hpp"
#include "effipose/nn_blocks.hpp"
#include "effipose/backbones.hpp"
#include "effipose/weights.hpp"
#include "effipose/accounting.hpp"
#include "effipose/supervision.hpp"
#include "effipose/model_builder.hpp"
#include "effipose/optimizer.hpp"
#include "effipose/data_pipeline.hpp"
#include "effipose/evaluation.hpp"
#include "effipose/training.hpp"
