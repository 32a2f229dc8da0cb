/*
   Copyright 2026 The resi Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include "resi/anoes.hpp"
#include "resi/ci.hpp"
#include "resi/distributions.hpp"
#include "resi/errors.hpp"
#include "resi/linmodels.hpp"
#include "resi/resi_core.hpp"
#include "resi/rng.hpp"
#include "resi/simharness.hpp"
