#pragma once

#include "contractflow/core/constraints.hpp"
#include "contractflow/core/plan.hpp"
#include "contractflow/core/schema.hpp"
#include "contractflow/core/serialize.hpp"
#include "contractflow/core/types.hpp"
#include "contractflow/debate.hpp"
#include "contractflow/engine.hpp"
#include "contractflow/executor.hpp"
#include "contractflow/fastpath/answer.hpp"
#include "contractflow/metrics.hpp"
#include "contractflow/negotiation.hpp"
#include "contractflow/router.hpp"
#include "contractflow/shell/config.hpp"
#include "contractflow/shell/provider.hpp"
#include "contractflow/toolhub/bench.hpp"
#include "contractflow/toolhub/toci.hpp"
#include "contractflow/toolmaker.hpp"
