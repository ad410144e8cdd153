#pragma once

#include "taotree/binary_io.hpp"
#include "taotree/dataset.hpp"
#include "taotree/error.hpp"
#include "taotree/inspect.hpp"
#include "taotree/mask_io.hpp"
#include "taotree/masks.hpp"
#include "taotree/mimic.hpp"
#include "taotree/solver.hpp"
#include "taotree/trainer.hpp"
#include "taotree/tree.hpp"
#include "taotree/tree_io.hpp"
