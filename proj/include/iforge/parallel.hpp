// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace iforge {

// Applies the IMPLICIT_FORGE_THREADS cap (if set) to the OpenMP runtime.
// Returns the resulting thread count.
int configure_threads_from_env();

void set_thread_count(int n);
int thread_count();

}  // namespace iforge
