/*
 * Copyright 2026 The hart-cpp authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>

namespace hart {

// Global thread knob for the OpenMP kernels. All kernels parallelize over
// independent output elements with a fixed per-element reduction order, so
// results are bit-identical for any thread count; threads(1) is the strict
// single-threaded reference mode.
void set_threads(int n);
int threads();

// True when a loop of `work` independent iterations is worth forking for.
bool parallel_worth(int64_t work);

}  // namespace hart
