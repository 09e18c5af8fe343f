#pragma once

#include "antipode/candidates.hpp"
#include "antipode/cloud.hpp"
#include "antipode/errors.hpp"
#include "antipode/mechanics.hpp"
#include "antipode/planner.hpp"
#include "antipode/preprocess.hpp"
#include "antipode/region_growing.hpp"
#include "antipode/robustness.hpp"
#include "antipode/spatial_index.hpp"
#include "antipode/stability.hpp"
#include "antipode/synthetic.hpp"
