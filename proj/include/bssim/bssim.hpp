// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it. Umbrella include.

#pragma once

#include "bssim/chipmodel.hpp"
#include "bssim/config.hpp"
#include "bssim/fft.hpp"
#include "bssim/ica.hpp"
#include "bssim/metrics.hpp"
#include "bssim/mixing.hpp"
#include "bssim/rng.hpp"
#include "bssim/runner.hpp"
#include "bssim/signalgen.hpp"
#include "bssim/stream.hpp"
