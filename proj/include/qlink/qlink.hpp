#pragma once

#include "qlink/density_matrix.hpp"
#include "qlink/rng.hpp"
#include "qlink/phase_control.hpp"
#include "qlink/quantum_state.hpp"
#include "qlink/link_analytics.hpp"
#include "qlink/protocol_engine.hpp"
#include "qlink/experiment_harness.hpp"
#include "qlink/config.hpp"
#include "qlink/io.hpp"
