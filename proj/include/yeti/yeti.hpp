#pragma once

// Umbrella header for the full pipeline: frame loading, similarity and
// alignment signals, episode-based intervention detection, evaluation,
// synthetic session generation, and the hyperparameter sweep harness.

#include "yeti/alignment.hpp"
#include "yeti/detector.hpp"
#include "yeti/error.hpp"
#include "yeti/eval.hpp"
#include "yeti/formats.hpp"
#include "yeti/frame.hpp"
#include "yeti/frame_io.hpp"
#include "yeti/png.hpp"
#include "yeti/remote.hpp"
#include "yeti/ssim.hpp"
#include "yeti/sweep.hpp"
#include "yeti/synth.hpp"
