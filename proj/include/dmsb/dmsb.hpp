#pragma once

#include "dmsb/bregman.hpp"
#include "dmsb/config.hpp"
#include "dmsb/data.hpp"
#include "dmsb/dynamics.hpp"
#include "dmsb/errors.hpp"
#include "dmsb/io.hpp"
#include "dmsb/langevin.hpp"
#include "dmsb/metrics.hpp"
#include "dmsb/nnet.hpp"
#include "dmsb/objective.hpp"
#include "dmsb/random.hpp"
#include "dmsb/schedule.hpp"
