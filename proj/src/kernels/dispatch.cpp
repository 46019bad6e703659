#include "toolforge/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <cstring>

namespace toolforge::kernels {

#ifndef TOOLFORGE_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
double squared_norm(const double* a, std::size_t n) { return scalar::squared_norm(a, n); }
} // namespace avx2
#endif

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

Isa detect_isa() {
#if defined(TOOLFORGE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2")) return Isa::Avx2;
#endif
    return Isa::Scalar;
}

namespace {

Isa initial_isa() {
    const char* force = std::getenv("TOOLFORGE_FORCE_SCALAR");
    if (force != nullptr && std::strcmp(force, "0") != 0 && *force != '\0') return Isa::Scalar;
    return detect_isa();
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

} // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_active_isa(Isa isa) {
    if (isa == Isa::Avx2 && detect_isa() != Isa::Avx2) isa = Isa::Scalar;
    current().store(isa, std::memory_order_relaxed);
    return isa;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    if (active_isa() == Isa::Avx2) return avx2::dot(a.data(), b.data(), a.size());
    return scalar::dot(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) {
    if (active_isa() == Isa::Avx2) return avx2::squared_norm(a.data(), a.size());
    return scalar::squared_norm(a.data(), a.size());
}

} // namespace toolforge::kernels
