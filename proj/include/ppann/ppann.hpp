#pragma once

#include "ppann/errors.hpp"
#include "ppann/dual.hpp"
#include "ppann/kinematics.hpp"
#include "ppann/picnn.hpp"
#include "ppann/pann.hpp"
#include "ppann/text_io.hpp"
#include "ppann/matgen.hpp"
#include "ppann/model_io.hpp"
#include "ppann/calib.hpp"
#include "ppann/verify.hpp"
