#pragma once

#include "psgi/error.hpp"
#include "psgi/rng.hpp"
#include "psgi/bits.hpp"
#include "psgi/log.hpp"
#include "psgi/expr.hpp"
#include "psgi/attributes.hpp"
#include "psgi/graph.hpp"
#include "psgi/serialize.hpp"
#include "psgi/domain.hpp"
#include "psgi/task.hpp"
#include "psgi/env.hpp"
#include "psgi/embeddings.hpp"
#include "psgi/graph_error.hpp"
#include "psgi/infer.hpp"
#include "psgi/policy.hpp"
#include "psgi/dot.hpp"
#include "psgi/harness.hpp"
