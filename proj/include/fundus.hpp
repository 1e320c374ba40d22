// Copyright 2026 The fundus-lesion-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "fundus/augment.hpp"
#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/evaluate.hpp"
#include "fundus/image.hpp"
#include "fundus/instances.hpp"
#include "fundus/modelconfig.hpp"
#include "fundus/preprocess.hpp"
#include "fundus/rle.hpp"
#include "fundus/rng.hpp"
