#pragma once

#include "loralife/version.hpp"
#include "loralife/errors.hpp"
#include "loralife/rng.hpp"
#include "loralife/phy.hpp"
#include "loralife/energy.hpp"
#include "loralife/mac.hpp"
#include "loralife/strategy.hpp"
#include "loralife/adr.hpp"
#include "loralife/sim.hpp"
#include "loralife/scenario_io.hpp"
