#pragma once

#include "datagen.hpp"
#include "dataset_io.hpp"
#include "dlt_core.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "hybrid.hpp"
#include "model.hpp"
#include "nn.hpp"
#include "random.hpp"
