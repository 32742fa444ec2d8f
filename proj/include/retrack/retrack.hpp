// Copyright 2026 The retrack Authors
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

#include "retrack/canonical.hpp"
#include "retrack/common.hpp"
#include "retrack/config.hpp"
#include "retrack/csv.hpp"
#include "retrack/eval.hpp"
#include "retrack/features.hpp"
#include "retrack/gaze.hpp"
#include "retrack/image.hpp"
#include "retrack/imgmath.hpp"
#include "retrack/linalg.hpp"
#include "retrack/matching.hpp"
#include "retrack/pgm.hpp"
#include "retrack/phantom.hpp"
#include "retrack/pipeline.hpp"
#include "retrack/svg.hpp"
