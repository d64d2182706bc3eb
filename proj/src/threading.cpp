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

#include "hart/threading.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hart {

namespace {
std::atomic<int> g_threads{0};  // 0 = OpenMP default
}

void set_threads(int n) {
  g_threads.store(std::max(0, n));
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() {
  int n = g_threads.load();
  if (n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool parallel_worth(int64_t work) {
#ifdef _OPENMP
  return threads() > 1 && work >= 4096;
#else
  (void)work;
  return false;
#endif
}

}  // namespace hart
