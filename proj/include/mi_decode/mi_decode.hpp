#pragma once

#include "mi_decode/classify.hpp"
#include "mi_decode/config.hpp"
#include "mi_decode/decoder.hpp"
#include "mi_decode/dsp.hpp"
#include "mi_decode/error.hpp"
#include "mi_decode/eval.hpp"
#include "mi_decode/evidence.hpp"
#include "mi_decode/features.hpp"
#include "mi_decode/io.hpp"
#include "mi_decode/report.hpp"
#include "mi_decode/rng.hpp"
#include "mi_decode/synth.hpp"
#include "mi_decode/types.hpp"
