#pragma once

#include "hotleg/common.hpp"
#include "hotleg/dataset.hpp"
#include "hotleg/deeponet.hpp"
#include "hotleg/evalbench.hpp"
#include "hotleg/flowgen.hpp"
#include "hotleg/nn.hpp"
#include "hotleg/serve.hpp"
#include "hotleg/training.hpp"
