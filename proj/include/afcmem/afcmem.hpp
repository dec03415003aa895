#pragma once

// Everything at once.

#include "afcmem/common.hpp"
#include "afcmem/rng.hpp"
#include "afcmem/fft.hpp"
#include "afcmem/spectrum.hpp"
#include "afcmem/propagation.hpp"
#include "afcmem/spinwave.hpp"
#include "afcmem/fitkit.hpp"
#include "afcmem/detection.hpp"
#include "afcmem/qubit.hpp"
#include "afcmem/benchmark.hpp"
#include "afcmem/config.hpp"
#include "afcmem/experiments.hpp"
