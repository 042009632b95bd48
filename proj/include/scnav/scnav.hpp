#pragma once

#include "scnav/config.hpp"
#include "scnav/environment.hpp"
#include "scnav/episode.hpp"
#include "scnav/gae.hpp"
#include "scnav/geometry.hpp"
#include "scnav/harness.hpp"
#include "scnav/nn/checkpoint.hpp"
#include "scnav/nn/gaussian.hpp"
#include "scnav/nn/networks.hpp"
#include "scnav/nn/params.hpp"
#include "scnav/occupancy.hpp"
#include "scnav/random.hpp"
#include "scnav/rvo.hpp"
#include "scnav/trpo.hpp"
#include "scnav/world.hpp"
