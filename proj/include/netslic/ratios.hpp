#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "netslic/model.hpp"

namespace netslic {

inline constexpr std::size_t kMinHistory = 8;

/// Across-bus VT ratio alpha_qs / alpha_qp from historical voltages of the
/// same bus seen through the two VTs: sum(V_qp) / sum(V_qs).
Phasor estimate_rho(std::span<const Phasor> v_qp, std::span<const Phasor> v_qs);

struct GammaEstimate {
    Phasor gamma{1.0, 0.0};
    /// Absent when the residual-current channel is identically zero.
    std::optional<Phasor> gamma_load;
    /// Ratios of any further incident lines' CTs, in the order given.
    std::vector<Phasor> gamma_others;
    double smallest_singular_value = 0.0;
};

/// CT ratio beta_qs / beta_qp (and beta_qL / beta_qp) by complex total least
/// squares on the KCL model gamma * I_qs + gamma_L * I_qL = -I_qp.
/// `i_others` carries the currents of further monitored lines incident to the
/// bus; each gets its own ratio. Throws IllConditionedError naming `bus` when
/// the current profiles are (nearly) collinear.
GammaEstimate estimate_gamma(std::span<const Phasor> i_qp, std::span<const Phasor> i_qs,
                             std::span<const Phasor> i_ql, BusId bus = 0,
                             const std::vector<std::vector<Phasor>>& i_others = {});

/// Generic complex TLS for A x = b (A is N x m); smallest right singular
/// vector of [A | b].
struct TlsSolution {
    std::vector<Phasor> x;
    double smallest_singular_value = 0.0;
    double condition_number = 0.0;
};

TlsSolution tls_complex(const std::vector<std::vector<Phasor>>& columns, std::span<const Phasor> rhs);

/// The same problem solved by realification: the 2N x (2m + 1) real system
/// [[Re A, -Im A, Re b], [Im A, Re A, Im b]].
TlsSolution tls_realified(const std::vector<std::vector<Phasor>>& columns, std::span<const Phasor> rhs);

}  // namespace netslic
