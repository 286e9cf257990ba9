#pragma once
// everything except io.hpp, which also needs json.hpp

#include "neckpinch/basis.hpp"
#include "neckpinch/cutoff.hpp"
#include "neckpinch/diagnostics.hpp"
#include "neckpinch/errors.hpp"
#include "neckpinch/evolution.hpp"
#include "neckpinch/geometry.hpp"
#include "neckpinch/modulation.hpp"
#include "neckpinch/spectral.hpp"
