#ifndef RVESCOPE_RVESCOPE_HPP
#define RVESCOPE_RVESCOPE_HPP

// Umbrella header for the rvescope library.

#include "rvescope/dataset.hpp"
#include "rvescope/errors.hpp"
#include "rvescope/generator.hpp"
#include "rvescope/image_io.hpp"
#include "rvescope/linalg.hpp"
#include "rvescope/micrograph.hpp"
#include "rvescope/model.hpp"
#include "rvescope/model_io.hpp"
#include "rvescope/optimize.hpp"
#include "rvescope/output.hpp"
#include "rvescope/parallel.hpp"
#include "rvescope/rng.hpp"
#include "rvescope/rve.hpp"
#include "rvescope/score.hpp"
#include "rvescope/window.hpp"

#endif
