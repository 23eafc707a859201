#pragma once

#include "filmgrade/blocks.hpp"
#include "filmgrade/color.hpp"
#include "filmgrade/cube_io.hpp"
#include "filmgrade/error.hpp"
#include "filmgrade/fit.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/loss.hpp"
#include "filmgrade/lut.hpp"
#include "filmgrade/metrics.hpp"
#include "filmgrade/parallel.hpp"
#include "filmgrade/pipeline.hpp"
#include "filmgrade/png_io.hpp"
#include "filmgrade/pyramid.hpp"
#include "filmgrade/random.hpp"
#include "filmgrade/weights.hpp"
