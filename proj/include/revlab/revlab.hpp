#pragma once

#include "revlab/aaccp.hpp"
#include "revlab/measures.hpp"
#include "revlab/rankone.hpp"
#include "revlab/reversibility.hpp"
#include "revlab/roofs.hpp"
#include "revlab/rotations.hpp"
#include "revlab/selfsim.hpp"
