/*
 * Copyright 2026 The hwmimo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#pragma once

#include "hwmimo/common.hpp"
#include "hwmimo/csv.hpp"
#include "hwmimo/estimation.hpp"
#include "hwmimo/experiment.hpp"
#include "hwmimo/model.hpp"
#include "hwmimo/montecarlo.hpp"
#include "hwmimo/random.hpp"
#include "hwmimo/rates.hpp"
#include "hwmimo/scenario.hpp"
#include "hwmimo/synth.hpp"
