#pragma once

namespace argan {

// Kernel parallelism cap. Initialized from ARGAN_THREADS (default 1); results
// are bit-reproducible for a fixed thread count.
int kernel_threads();
void set_kernel_threads(int n);

}  // namespace argan
