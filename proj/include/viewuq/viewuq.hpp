#pragma once

#include "viewuq/core/binary_io.hpp"
#include "viewuq/core/error.hpp"
#include "viewuq/core/rng.hpp"

#include "viewuq/autodiff/adam.hpp"
#include "viewuq/autodiff/graph.hpp"
#include "viewuq/autodiff/tensor.hpp"
#include "viewuq/autodiff/tensor_io.hpp"

#include "viewuq/render/colormap.hpp"
#include "viewuq/render/dataset.hpp"
#include "viewuq/render/image.hpp"
#include "viewuq/render/png.hpp"
#include "viewuq/render/renderer.hpp"
#include "viewuq/render/transfer_function.hpp"
#include "viewuq/render/view.hpp"
#include "viewuq/render/volume.hpp"

#include "viewuq/model/checkpoint.hpp"
#include "viewuq/model/synthesis_model.hpp"
#include "viewuq/model/trainer.hpp"

#include "viewuq/uq/ensemble_io.hpp"
#include "viewuq/uq/sensitivity.hpp"
#include "viewuq/uq/uncertainty.hpp"

#include "viewuq/sweep/grid.hpp"
#include "viewuq/sweep/heatmap.hpp"
#include "viewuq/sweep/records.hpp"
#include "viewuq/sweep/stats.hpp"
#include "viewuq/sweep/study.hpp"
#include "viewuq/sweep/sweep.hpp"

#include "viewuq/demo/demo1d.hpp"

#include "viewuq/service/service.hpp"
