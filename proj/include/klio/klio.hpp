// klio - LiDAR-inertial odometry with an EKF backend
// SPDX-License-Identifier: MIT

#pragma once

#include "klio/config.hpp"
#include "klio/dataset_io.hpp"
#include "klio/ekf.hpp"
#include "klio/evaluation.hpp"
#include "klio/geometry.hpp"
#include "klio/imu.hpp"
#include "klio/kdtree.hpp"
#include "klio/map_cloud.hpp"
#include "klio/mapping.hpp"
#include "klio/pipeline.hpp"
#include "klio/point_cloud.hpp"
#include "klio/preintegration.hpp"
#include "klio/scan_matching.hpp"
#include "klio/simulator.hpp"
