// Copyright 2026 The micro-retrieval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "micro/backtest.hpp"
#include "micro/common.hpp"
#include "micro/count_table.hpp"
#include "micro/embedding.hpp"
#include "micro/graph.hpp"
#include "micro/init.hpp"
#include "micro/io.hpp"
#include "micro/log.hpp"
#include "micro/metrics.hpp"
#include "micro/retrieval.hpp"
#include "micro/sampler.hpp"
#include "micro/skmeans.hpp"
#include "micro/synth.hpp"
