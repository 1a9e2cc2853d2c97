#pragma once

// Shared fixtures: the benchmark reductions are computed once per process.

#include <map>
#include <memory>
#include <mutex>

#include "ddessm/rom_analysis.hpp"
#include "ddessm/spectral.hpp"
#include "ddessm/ssm.hpp"

namespace testing {

using namespace ddessm;

struct Reduced {
    DelaySystem sys;
    ChainSystem cs;
    Spectrum spec;
    MasterMode master;
    SsmExpansion ssm;
    Rom rom;
};

inline Reduced reduce(const DelaySystem& sys, int N, int order) {
    ChainSystem cs = build_chain(sys, N);
    Spectrum spec = compute_spectrum(cs, 10);
    MasterMode master = select_master(cs, spec);
    SsmOptions o;
    o.spectrum = spec.eigenvalues;
    SsmExpansion ssm = compute_ssm(cs, master, order, o);
    Rom rom = make_rom(ssm, cs);
    return {sys, cs, spec, master, ssm, rom};
}

/// Delayed Duffing oscillator (delta 0.2, alpha 2, beta -4), N = 100, order 9.
inline const Reduced& duffing(double tau) {
    static std::mutex m;
    static std::map<double, std::unique_ptr<Reduced>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& slot = cache[tau];
    if (!slot) slot = std::make_unique<Reduced>(reduce(make_duffing(0.2, 2.0, -4.0, tau), 100, 9));
    return *slot;
}

inline const Reduced& coupled_post_hopf() {
    static const Reduced r = reduce(make_coupled_oscillators(0.015, 0.035, 0.3, -0.145, -0.1, 0.5), 20, 9);
    return r;
}

inline const Reduced& hutchinson_post_hopf() {
    static const Reduced r = [] {
        HutchinsonConfig hc;
        hc.a = 1.5707963267948966 + 0.05;
        return reduce(make_hutchinson(hc), 100, 9);
    }();
    return r;
}

}  // namespace testing
