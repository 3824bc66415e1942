#pragma once

// Umbrella header.
#include "lingofuse/adversary.hpp"
#include "lingofuse/config.hpp"
#include "lingofuse/corpus.hpp"
#include "lingofuse/encoder.hpp"
#include "lingofuse/error.hpp"
#include "lingofuse/experiments.hpp"
#include "lingofuse/fusion.hpp"
#include "lingofuse/langspec.hpp"
#include "lingofuse/lexicon.hpp"
#include "lingofuse/metrics.hpp"
#include "lingofuse/model.hpp"
#include "lingofuse/optim.hpp"
#include "lingofuse/params.hpp"
#include "lingofuse/report.hpp"
#include "lingofuse/synthetic.hpp"
#include "lingofuse/tokenizer.hpp"
#include "lingofuse/trainer.hpp"
