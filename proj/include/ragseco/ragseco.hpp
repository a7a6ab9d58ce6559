#pragma once

#include "ragseco/checkpoint.hpp"
#include "ragseco/config.hpp"
#include "ragseco/data.hpp"
#include "ragseco/graphs.hpp"
#include "ragseco/metrics.hpp"
#include "ragseco/model.hpp"
#include "ragseco/ops.hpp"
#include "ragseco/optimizer.hpp"
#include "ragseco/rng.hpp"
#include "ragseco/sparse.hpp"
#include "ragseco/splits.hpp"
#include "ragseco/tensor.hpp"
#include "ragseco/train.hpp"
