#pragma once

#include <flare/core.hpp>
#include <flare/cycle.hpp>
#include <flare/gradcheck.hpp>
#include <flare/io.hpp>
#include <flare/losses.hpp>
#include <flare/matrix.hpp>
#include <flare/metrics.hpp>
#include <flare/pipeline.hpp>
#include <flare/trainer.hpp>
#include <flare/config.hpp>
