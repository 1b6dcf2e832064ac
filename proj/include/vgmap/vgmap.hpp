#pragma once

#include "vgmap/config.hpp"
#include "vgmap/digest.hpp"
#include "vgmap/errors.hpp"
#include "vgmap/extraction.hpp"
#include "vgmap/fft.hpp"
#include "vgmap/field.hpp"
#include "vgmap/io.hpp"
#include "vgmap/physics.hpp"
#include "vgmap/pipeline.hpp"
#include "vgmap/reconstruction.hpp"
#include "vgmap/rng.hpp"
#include "vgmap/signal.hpp"
#include "vgmap/stats.hpp"
