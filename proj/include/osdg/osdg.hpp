#pragma once

#include "osdg/autograd.hpp"
#include "osdg/checkpoint.hpp"
#include "osdg/config.hpp"
#include "osdg/datasets.hpp"
#include "osdg/detectors.hpp"
#include "osdg/errors.hpp"
#include "osdg/generator.hpp"
#include "osdg/glyphs.hpp"
#include "osdg/idx.hpp"
#include "osdg/io.hpp"
#include "osdg/metrics.hpp"
#include "osdg/network.hpp"
#include "osdg/objective.hpp"
#include "osdg/rng.hpp"
#include "osdg/runner.hpp"
#include "osdg/tensor.hpp"
