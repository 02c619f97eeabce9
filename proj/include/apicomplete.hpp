// Copyright 2026 The apicomplete Authors
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


// Single include for the whole library.

#pragma once

#include "apicomplete/advaug.hpp"
#include "apicomplete/checkpoint.hpp"
#include "apicomplete/commands.hpp"
#include "apicomplete/common.hpp"
#include "apicomplete/config.hpp"
#include "apicomplete/corpus.hpp"
#include "apicomplete/dataset.hpp"
#include "apicomplete/decoder.hpp"
#include "apicomplete/evaluate.hpp"
#include "apicomplete/metrics.hpp"
#include "apicomplete/model.hpp"
#include "apicomplete/rng.hpp"
#include "apicomplete/synthetic.hpp"
#include "apicomplete/text.hpp"
#include "apicomplete/tokenizer.hpp"
#include "apicomplete/trainer.hpp"
