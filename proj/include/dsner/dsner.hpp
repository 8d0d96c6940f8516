#pragma once

#include "dsner/config.hpp"
#include "dsner/corpus.hpp"
#include "dsner/dictionary.hpp"
#include "dsner/errors.hpp"
#include "dsner/evalx.hpp"
#include "dsner/io.hpp"
#include "dsner/losses.hpp"
#include "dsner/model.hpp"
#include "dsner/rng.hpp"
#include "dsner/synth.hpp"
#include "dsner/training.hpp"
