// Umbrella header.
#pragma once

#include "lidar2mm/convert.hpp"
#include "lidar2mm/geometry.hpp"
#include "lidar2mm/io.hpp"
#include "lidar2mm/loss.hpp"
#include "lidar2mm/metrics.hpp"
#include "lidar2mm/preprocess.hpp"
#include "lidar2mm/rng.hpp"
#include "lidar2mm/types.hpp"
