#pragma once

// Everything. httplib (via service.hpp) has to come after the Eigen-based
// headers, so keep that include last.

#include "vgcn/errors.hpp"
#include "vgcn/types.hpp"
#include "vgcn/tensor.hpp"
#include "vgcn/autodiff.hpp"
#include "vgcn/geometry.hpp"
#include "vgcn/graph.hpp"
#include "vgcn/image.hpp"
#include "vgcn/features.hpp"
#include "vgcn/model.hpp"
#include "vgcn/checkpoint.hpp"
#include "vgcn/dataset.hpp"
#include "vgcn/training.hpp"
#include "vgcn/benchmark.hpp"
#include "vgcn/inference.hpp"
#include "vgcn/service.hpp"
