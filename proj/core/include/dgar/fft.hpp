#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace dgar::sim {

int64_t next_pow2(int64_t n);

// In-place iterative radix-2 FFT (forward, e^{-j2*pi*k*n/N}); size must be a
// power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

}  // namespace dgar::sim
