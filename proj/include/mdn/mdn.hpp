#pragma once

#include "mdn/checkpoint.hpp"
#include "mdn/core.hpp"
#include "mdn/error.hpp"
#include "mdn/eval.hpp"
#include "mdn/inference.hpp"
#include "mdn/loss.hpp"
#include "mdn/manifest.hpp"
#include "mdn/pnm.hpp"
#include "mdn/preprocess.hpp"
#include "mdn/report.hpp"
#include "mdn/segnet.hpp"
#include "mdn/synthgen.hpp"
#include "mdn/train.hpp"
