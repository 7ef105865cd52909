#pragma once

#include "mirrorsim/analysis.hpp"
#include "mirrorsim/devices.hpp"
#include "mirrorsim/engine.hpp"
#include "mirrorsim/errors.hpp"
#include "mirrorsim/experiments.hpp"
#include "mirrorsim/linalg.hpp"
#include "mirrorsim/netlist.hpp"
#include "mirrorsim/version.hpp"
