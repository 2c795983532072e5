#pragma once

#include "satlms/core.hpp"
#include "satlms/csv.hpp"
#include "satlms/dynamics.hpp"
#include "satlms/moments.hpp"
#include "satlms/oracle.hpp"
#include "satlms/simulator.hpp"
#include "satlms/steadystate.hpp"
