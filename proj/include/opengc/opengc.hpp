// Copyright 2026 The OpenGC Authors.
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

#include "opengc/artifacts.hpp"
#include "opengc/condenser.hpp"
#include "opengc/config.hpp"
#include "opengc/datagen.hpp"
#include "opengc/dataset_io.hpp"
#include "opengc/dense.hpp"
#include "opengc/environments.hpp"
#include "opengc/error.hpp"
#include "opengc/evaluation.hpp"
#include "opengc/graph.hpp"
#include "opengc/linalg.hpp"
#include "opengc/openset.hpp"
#include "opengc/propagation.hpp"
#include "opengc/relay.hpp"
#include "opengc/rng.hpp"
#include "opengc/tape.hpp"
