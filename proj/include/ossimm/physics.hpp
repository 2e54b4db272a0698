#pragma once

#include <span>

#include "ossimm/types.hpp"

namespace ossimm {

/// Pulse-sequence timing for a quadratically phase-cycled steady-state
/// acquisition. RF pulses are instantaneous; TE is measured from the pulse.
struct SequenceParams {
    double tr_s = 0.015;
    double te_s = 0.0027;
    double flip_rad = 10.0 * kPi / 180.0;
    int n_c = 10;
    int n_warmup_tr = 670;

    /// Throws std::invalid_argument when an invariant is violated.
    /// A zero flip angle is accepted (it yields an all-zero signal).
    void validate() const;
};

struct IsochromatParams {
    double t1_s = 1.4;
    double t2_s = 0.0926;
    double f0_hz = 0.0;
    cplx m0{1.0, 0.0};

    void validate() const;
};

/// RF phase of the n-th TR, pi * n^2 / n_c reduced to [0, 2pi).
double quadratic_phase(long long n, int n_c);

/// Steady-state transverse magnetization of one isochromat over one
/// oscillation period, recorded at TE and demodulated by the RF phase.
FastTimeSignal simulate_isochromat(const SequenceParams& seq, const IsochromatParams& iso);

/// Unit-m0 steady-state signals for many off-resonance frequencies sharing
/// (T1, T2). Row i holds the isochromat at freqs_hz[i]. Rows are computed
/// independently, so the result does not depend on the thread schedule.
CMatrix isochromat_bank(const SequenceParams& seq, double t1_s, double t2_s,
                        std::span<const double> freqs_hz);

/// Single-threaded reference for isochromat_bank.
CMatrix isochromat_bank_serial(const SequenceParams& seq, double t1_s, double t2_s,
                               std::span<const double> freqs_hz);

}  // namespace ossimm
