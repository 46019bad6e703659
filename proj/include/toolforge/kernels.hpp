#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace toolforge::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

// Best ISA the running CPU supports and this build compiled in.
Isa detect_isa();

// ISA used by the dispatched entry points below. Defaults to detect_isa();
// TOOLFORGE_FORCE_SCALAR=1 in the environment pins it to Scalar.
Isa active_isa();

// Overrides the dispatch target (tests use this to compare variants).
// Requesting an ISA the CPU lacks falls back to Scalar; returns the ISA set.
Isa set_active_isa(Isa isa);

// Both variants accumulate in four interleaved lanes and reduce as
// (l0 + l2) + (l1 + l3), then add the tail in order, without FMA. They
// therefore return bit-identical results for the same inputs.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_norm(const double* a, std::size_t n);
} // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_norm(const double* a, std::size_t n);
} // namespace avx2

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

} // namespace toolforge::kernels
