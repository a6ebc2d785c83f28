#pragma once

#include "ifom/autograd.hpp"
#include "ifom/checkpoint.hpp"
#include "ifom/datagen.hpp"
#include "ifom/error.hpp"
#include "ifom/image.hpp"
#include "ifom/losses.hpp"
#include "ifom/metrics.hpp"
#include "ifom/models.hpp"
#include "ifom/optim.hpp"
#include "ifom/tensor.hpp"
#include "ifom/training.hpp"
#include "ifom/transforms.hpp"
