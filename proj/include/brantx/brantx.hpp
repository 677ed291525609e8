#pragma once

#include "brantx/align.hpp"
#include "brantx/augment.hpp"
#include "brantx/autograd.hpp"
#include "brantx/checkpoint.hpp"
#include "brantx/common.hpp"
#include "brantx/dataio.hpp"
#include "brantx/downstream.hpp"
#include "brantx/encoder.hpp"
#include "brantx/metrics.hpp"
#include "brantx/sigcore.hpp"
#include "brantx/spectral.hpp"
#include "brantx/synthdata.hpp"
