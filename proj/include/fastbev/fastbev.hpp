#pragma once

#include "fastbev/augment.hpp"
#include "fastbev/beacon_fusion.hpp"
#include "fastbev/bench.hpp"
#include "fastbev/error.hpp"
#include "fastbev/geometry.hpp"
#include "fastbev/io.hpp"
#include "fastbev/lut.hpp"
#include "fastbev/projection.hpp"
#include "fastbev/scene.hpp"
#include "fastbev/temporal.hpp"
