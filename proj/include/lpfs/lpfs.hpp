#pragma once

#include "lpfs/errors.hpp"
#include "lpfs/gates.hpp"
#include "lpfs/prox_optim.hpp"
#include "lpfs/metrics.hpp"
#include "lpfs/ctr_model.hpp"
#include "lpfs/data.hpp"
#include "lpfs/checkpoint.hpp"
#include "lpfs/selection.hpp"
#include "lpfs/config.hpp"
#include "lpfs/report_io.hpp"
#include "lpfs/commands.hpp"
