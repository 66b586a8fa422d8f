// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace doapnn {

// Feature maps are a few hundred KB each and are allocated and freed on
// every op. Above glibc's default mmap threshold each of those becomes an
// mmap/munmap pair plus page faults, which costs about a third of training
// time. Keeping them on the heap avoids that. No-op elsewhere.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace doapnn
