#pragma once

#include "jvlgs/autograd.hpp"
#include "jvlgs/data.hpp"
#include "jvlgs/encoders.hpp"
#include "jvlgs/error.hpp"
#include "jvlgs/eval.hpp"
#include "jvlgs/head.hpp"
#include "jvlgs/mask.hpp"
#include "jvlgs/model.hpp"
#include "jvlgs/params.hpp"
#include "jvlgs/pipeline.hpp"
#include "jvlgs/synth.hpp"
#include "jvlgs/tensor.hpp"
#include "jvlgs/tsm.hpp"
#include "jvlgs/vlf.hpp"
