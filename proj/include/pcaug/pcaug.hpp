// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pcaug/config.hpp"
#include "pcaug/dbscan.hpp"
#include "pcaug/error.hpp"
#include "pcaug/ground.hpp"
#include "pcaug/insertion.hpp"
#include "pcaug/io.hpp"
#include "pcaug/losses.hpp"
#include "pcaug/object_pool.hpp"
#include "pcaug/point_cloud.hpp"
#include "pcaug/random.hpp"
#include "pcaug/range_view.hpp"
#include "pcaug/voxel_grid.hpp"
