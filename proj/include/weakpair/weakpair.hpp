#pragma once

#include "weakpair/corpus.hpp"
#include "weakpair/encoder.hpp"
#include "weakpair/errors.hpp"
#include "weakpair/eval.hpp"
#include "weakpair/ingest.hpp"
#include "weakpair/io.hpp"
#include "weakpair/losses.hpp"
#include "weakpair/optim.hpp"
#include "weakpair/pipeline.hpp"
#include "weakpair/rng.hpp"
#include "weakpair/synth.hpp"
#include "weakpair/textproc.hpp"
