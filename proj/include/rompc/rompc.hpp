#pragma once

#include "rompc/baselines.hpp"
#include "rompc/benchmark.hpp"
#include "rompc/bounding.hpp"
#include "rompc/conic.hpp"
#include "rompc/error.hpp"
#include "rompc/io.hpp"
#include "rompc/iqc.hpp"
#include "rompc/lti.hpp"
#include "rompc/mpc.hpp"
#include "rompc/pipeline.hpp"
#include "rompc/reduction.hpp"
#include "rompc/sdp.hpp"
#include "rompc/synthesis.hpp"
