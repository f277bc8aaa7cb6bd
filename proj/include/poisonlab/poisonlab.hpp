#pragma once

#include "poisonlab/attack.hpp"
#include "poisonlab/config.hpp"
#include "poisonlab/data.hpp"
#include "poisonlab/defense.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/harness.hpp"
#include "poisonlab/io.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/reachability.hpp"
#include "poisonlab/targetgen.hpp"
#include "poisonlab/train.hpp"
