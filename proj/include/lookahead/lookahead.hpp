#pragma once

// Umbrella header for the whole library.

#include "lookahead/corpus.hpp"
#include "lookahead/draft.hpp"
#include "lookahead/engine.hpp"
#include "lookahead/metrics.hpp"
#include "lookahead/model.hpp"
#include "lookahead/report.hpp"
#include "lookahead/stats.hpp"
#include "lookahead/trie_cache.hpp"
#include "lookahead/types.hpp"
#include "lookahead/verifier.hpp"
