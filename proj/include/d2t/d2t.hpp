#pragma once

// Umbrella header for the data-to-text pipeline toolkit.

#include "d2t/common.hpp"
#include "d2t/core_types.hpp"
#include "d2t/decode.hpp"
#include "d2t/ingest.hpp"
#include "d2t/linearize.hpp"
#include "d2t/manifest.hpp"
#include "d2t/metrics.hpp"
#include "d2t/model.hpp"
#include "d2t/report.hpp"
#include "d2t/span.hpp"
#include "d2t/tensor.hpp"
#include "d2t/tokenizer.hpp"
#include "d2t/train.hpp"
