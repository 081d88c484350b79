#pragma once

#include "verde/analysis.hpp"
#include "verde/error.hpp"
#include "verde/io.hpp"
#include "verde/lattice/enumeration.hpp"
#include "verde/lattice/precision.hpp"
#include "verde/lattice/reducer.hpp"
#include "verde/lwe.hpp"
#include "verde/oracle.hpp"
#include "verde/pipeline.hpp"
#include "verde/recovery.hpp"
#include "verde/reduction.hpp"
#include "verde/rng.hpp"
#include "verde/tokenizer.hpp"
#include "verde/tricks.hpp"
#include "verde/usvp.hpp"
