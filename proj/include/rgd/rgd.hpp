// Copyright 2026 The RGD Authors.
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

#include "rgd/errors.hpp"
#include "rgd/linalg.hpp"
#include "rgd/reweight.hpp"
#include "rgd/models.hpp"
#include "rgd/optim.hpp"
#include "rgd/dro_oracle.hpp"
#include "rgd/datagen.hpp"
#include "rgd/trace.hpp"
#include "rgd/config.hpp"
#include "rgd/harness.hpp"
#include "rgd/verify.hpp"
