#ifndef LPSV_LPSV_HPP
#define LPSV_LPSV_HPP

#include "lpsv/errors.hpp"
#include "lpsv/harness.hpp"
#include "lpsv/io.hpp"
#include "lpsv/kernel.hpp"
#include "lpsv/lamperti.hpp"
#include "lpsv/model.hpp"
#include "lpsv/noise.hpp"
#include "lpsv/particle.hpp"
#include "lpsv/quadrature.hpp"
#include "lpsv/rng.hpp"
#include "lpsv/runner.hpp"
#include "lpsv/scenario.hpp"
#include "lpsv/spde.hpp"

#endif
