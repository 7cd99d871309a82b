#pragma once

#include "nvphoto/calibration.hpp"
#include "nvphoto/commands.hpp"
#include "nvphoto/error.hpp"
#include "nvphoto/estimator.hpp"
#include "nvphoto/io.hpp"
#include "nvphoto/photophysics.hpp"
#include "nvphoto/profiles.hpp"
#include "nvphoto/pulsesim.hpp"
#include "nvphoto/ratemodel.hpp"
#include "nvphoto/sensitivity.hpp"
