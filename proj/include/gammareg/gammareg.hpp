#pragma once

#include "gammareg/analysis.hpp"
#include "gammareg/experiments.hpp"
#include "gammareg/generators.hpp"
#include "gammareg/io.hpp"
#include "gammareg/mdp.hpp"
#include "gammareg/offline.hpp"
#include "gammareg/pevi.hpp"
#include "gammareg/random.hpp"
#include "gammareg/solvers.hpp"
