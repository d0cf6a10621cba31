#pragma once

#include "combss/csv.hpp"
#include "combss/glm.hpp"
#include "combss/optimizer.hpp"
#include "combss/path.hpp"
#include "combss/relaxation.hpp"
#include "combss/simbench.hpp"
#include "combss/types.hpp"
