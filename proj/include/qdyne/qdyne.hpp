#pragma once

#include "qdyne/analysis.hpp"
#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"
#include "qdyne/sensitivity.hpp"
#include "qdyne/sequence.hpp"
#include "qdyne/sequence_text.hpp"
#include "qdyne/simulator.hpp"
#include "qdyne/spin_core.hpp"
#include "qdyne/trace_io.hpp"
#include "qdyne/units.hpp"
