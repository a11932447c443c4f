#pragma once

#include "amlrec/acquisition.hpp"
#include "amlrec/errors.hpp"
#include "amlrec/evaluation.hpp"
#include "amlrec/gplvm.hpp"
#include "amlrec/kernel.hpp"
#include "amlrec/parallel.hpp"
#include "amlrec/perf_matrix.hpp"
#include "amlrec/predictor.hpp"
#include "amlrec/recommender.hpp"
#include "amlrec/rng.hpp"
#include "amlrec/svg.hpp"
