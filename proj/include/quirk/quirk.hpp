#pragma once

// Everything in one include.

#include "quirk/bspline.hpp"
#include "quirk/cli.hpp"
#include "quirk/config.hpp"
#include "quirk/data.hpp"
#include "quirk/diagnostics.hpp"
#include "quirk/dr.hpp"
#include "quirk/errors.hpp"
#include "quirk/format.hpp"
#include "quirk/interpret.hpp"
#include "quirk/model_io.hpp"
#include "quirk/network.hpp"
#include "quirk/parallel.hpp"
#include "quirk/qsim.hpp"
#include "quirk/random.hpp"
#include "quirk/svg.hpp"
#include "quirk/train.hpp"
