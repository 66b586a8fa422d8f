// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "doapnn/acoustics.hpp"
#include "doapnn/classical.hpp"
#include "doapnn/errors.hpp"
#include "doapnn/features.hpp"
#include "doapnn/fft.hpp"
#include "doapnn/harness.hpp"
#include "doapnn/io/checkpoint.hpp"
#include "doapnn/io/config.hpp"
#include "doapnn/io/dataset.hpp"
#include "doapnn/io/report.hpp"
#include "doapnn/io/synth.hpp"
#include "doapnn/io/wav.hpp"
#include "doapnn/model.hpp"
#include "doapnn/rng.hpp"
#include "doapnn/runtime.hpp"
#include "doapnn/spectrum.hpp"
#include "doapnn/tensor/ndarray.hpp"
#include "doapnn/tensor/optim.hpp"
#include "doapnn/tensor/tape.hpp"
