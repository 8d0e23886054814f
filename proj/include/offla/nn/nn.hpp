#pragma once

#include "offla/nn/attention.hpp"
#include "offla/nn/checkpoint.hpp"
#include "offla/nn/layers.hpp"
#include "offla/nn/ops.hpp"
#include "offla/nn/optim.hpp"
#include "offla/nn/positional.hpp"
#include "offla/nn/tensor.hpp"
