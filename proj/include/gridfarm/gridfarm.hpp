#pragma once

#include "gridfarm/campaign.hpp"
#include "gridfarm/config_io.hpp"
#include "gridfarm/core.hpp"
#include "gridfarm/errors.hpp"
#include "gridfarm/fabric.hpp"
#include "gridfarm/io.hpp"
#include "gridfarm/live.hpp"
#include "gridfarm/master.hpp"
#include "gridfarm/metrics.hpp"
#include "gridfarm/mock_dock.hpp"
#include "gridfarm/presets.hpp"
#include "gridfarm/pull.hpp"
#include "gridfarm/push.hpp"
#include "gridfarm/report_io.hpp"
#include "gridfarm/rng.hpp"
#include "gridfarm/sim_kernel.hpp"
#include "gridfarm/wire.hpp"
