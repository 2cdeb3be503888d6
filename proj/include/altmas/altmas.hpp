#pragma once

#include "altmas/acquisition.hpp"
#include "altmas/common.hpp"
#include "altmas/datapool.hpp"
#include "altmas/estimation.hpp"
#include "altmas/harness.hpp"
#include "altmas/metrics.hpp"
#include "altmas/surrogate.hpp"
