#pragma once

// Umbrella header.

#include "tpca/baselines.hpp"
#include "tpca/contraction_kernel.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/diagnostics.hpp"
#include "tpca/error.hpp"
#include "tpca/harness.hpp"
#include "tpca/power_methods.hpp"
#include "tpca/rng.hpp"
#include "tpca/smpi.hpp"
#include "tpca/spiked_model.hpp"
#include "tpca/tensor_io.hpp"
#include "tpca/variants.hpp"
#include "tpca/vector_ops.hpp"
#include "tpca/version.hpp"
