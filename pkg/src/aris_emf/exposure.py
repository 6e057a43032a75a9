"""Reference-SAR polynomial, per-user exposure, and the network exposure index.

The transmitter has two antennas; the beam is parameterized by amplitudes
(alpha_1 = 1, alpha_2) and the relative phase beta_2. The reference SAR is a
fitted trigonometric polynomial in those three quantities with twenty
coefficients; absolute SAR values depend on the fitted hardware, so the
shipped default model is synthetic (positive and phase-sensitive) and any
user-supplied 20-coefficient file can be loaded instead.

Exposure bookkeeping: a user's per-slot exposure is sum_n delta*p*SAR over
its resource elements, and the network index averages that over users and
slots and scales by the slot duration. The index is reported in W/kg with
the duration factor included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InfeasibleError(RuntimeError):
    """A hard feasibility failure (rates unreachable within the power budget)."""


_GRID = 64
_ALPHA2_MAX = 4.0


@dataclass(frozen=True)
class SarModel:
    """Twenty fitted coefficients b_1..b_20 of the reference-SAR polynomial.

    Positivity over the operating range (alpha_2 in [0, 4], beta_2 in
    [0, 2pi)) is checked on a 64x64 grid at construction time.
    """

    b: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.b)
        if len(b) != 20:
            raise ValueError(f"SarModel needs exactly 20 coefficients, got {len(b)}")
        object.__setattr__(self, "b", b)
        a2 = np.linspace(0.0, _ALPHA2_MAX, _GRID)
        b2 = np.linspace(0.0, 2.0 * np.pi, _GRID, endpoint=False)
        vals = reference_sar(self, np.stack([np.ones(_GRID), a2]), b2[:, None])
        if np.min(vals) <= 0.0:
            i, j = np.unravel_index(np.argmin(vals), vals.shape)
            raise ValueError(
                "SAR model fails positivity validation: "
                f"SAR={vals[i, j]:.6g} at alpha2={a2[j]:.4g}, beta2={b2[i]:.4g}")


# Synthetic default: quadratic part dominated by the per-antenna terms, with a
# first- and third-harmonic phase modulation whose worst case (|m| <= 1.4)
# cannot overcome the quadratic floor.
_DEFAULT_B = (4.0, 1.0, 4.0,          # b1..b3  quadratic part
              1.0, 0.0, 1.0,          # b4..b6  modulation envelope
              0.0, 0.6, 0.0, 0.8, 0.0, 0.0, 0.0,   # b7..b13  harmonic amplitudes
              0.0, 0.4, 0.0, 0.7, 0.0, 0.0, 0.0)   # b14..b20 harmonic phase offsets


def default_sar_model():
    return SarModel(_DEFAULT_B)


def load_sar_model(path):
    """Read 20 whitespace-separated reals (order b_1..b_20) from a file."""
    with open(path, "r", encoding="utf-8") as fh:
        vals = fh.read().split()
    if len(vals) != 20:
        raise ValueError(f"SAR model file must hold exactly 20 numbers, got {len(vals)}")
    return SarModel(tuple(float(v) for v in vals))


def reference_sar(model, alpha, beta2):
    """Reference SAR of a 2-antenna beam (1/kg).

    alpha: array-like (2, ...) of amplitudes squared, alpha_1 = 1 by
    convention; beta2: relative phase in radians (broadcastable). Returns
    b1*a1 + b2*sqrt(a1*a2) + b3*a2 plus the (b4*a1 + b5*sqrt(a1*a2) +
    b6*a2)-weighted harmonic series sum_{k=0..6} b_{7+k} cos(k*beta2 +
    b_{14+k}).
    """
    b = model.b
    alpha = np.asarray(alpha, dtype=float)
    a1, a2 = alpha[0], alpha[1]
    beta2 = np.asarray(beta2, dtype=float)
    cross = np.sqrt(a1 * a2)
    quad = b[0] * a1 + b[1] * cross + b[2] * a2
    env = b[3] * a1 + b[4] * cross + b[5] * a2
    harm = 0.0
    for k in range(7):
        if b[6 + k] != 0.0:
            harm = harm + b[6 + k] * np.cos(k * beta2 + b[13 + k])
    out = quad + env * harm
    if out.ndim == 0:
        return float(out)
    return out


def achievable_rate(delta, p, gamma, w, sigma2):
    """Uplink rate w*delta*log2(1 + p*gamma/sigma2) in bits/s."""
    return w * delta * np.log2(1.0 + p * gamma / sigma2)


def min_power_for_rate(rbar, gamma, sigma2, w):
    """Transmit power that meets the rate share `rbar` exactly: (2^{r/w}-1) sigma2/gamma."""
    if rbar == 0:
        return 0.0
    if gamma <= 0:
        raise InfeasibleError(
            f"link with zero channel gain cannot carry a positive rate ({rbar} bits/s)")
    return (math.pow(2.0, rbar / w) - 1.0) * sigma2 / gamma


def user_exposure(delta, p, sar):
    """Per-slot exposure of one user: sum_n delta_n * p_n * SAR_n (W/kg before duration scaling)."""
    return float(np.sum(np.asarray(delta, dtype=float) * np.asarray(p, dtype=float)
                        * np.asarray(sar, dtype=float)))


def exposure_index(per_user_exposure, slot_duration):
    """Network exposure index: (duration / (N_T * U)) * sum over users and slots.

    `per_user_exposure` has shape (U, N_T). An empty tensor (no users)
    yields 0 by convention.
    """
    e = np.asarray(per_user_exposure, dtype=float)
    if e.size == 0:
        return 0.0
    u, nt = e.shape
    return float(slot_duration / (nt * u) * np.sum(e))


def sar_vs_lobe_angle(model, phi_deg, spacing=0.5):
    """Reference SAR of a unit two-antenna beam steered to angle phi (degrees).

    Steering a 2-element array with element spacing `spacing` (in
    wavelengths) to angle phi requires the relative phase
    beta2 = -2*pi*spacing*sin(phi); amplitudes are (1, 1).
    """
    phi = np.deg2rad(np.asarray(phi_deg, dtype=float))
    beta2 = -2.0 * np.pi * spacing * np.sin(phi)
    alpha = np.stack([np.ones_like(beta2), np.ones_like(beta2)])
    return reference_sar(model, alpha, beta2)


@dataclass(frozen=True)
class ExposureReport:
    """Outcome of one optimized (or benchmark) run.

    per_user_exposure has shape (U, N_T); exposure_index aggregates it;
    achieved_rates holds each user's worst per-slot rate in bits/s.
    """

    per_user_exposure: np.ndarray
    exposure_index: float
    achieved_rates: np.ndarray
    label: str

    def __post_init__(self):
        object.__setattr__(self, "per_user_exposure",
                           np.asarray(self.per_user_exposure, dtype=float))
        object.__setattr__(self, "achieved_rates",
                           np.asarray(self.achieved_rates, dtype=float))

    def check(self, slot_duration):
        got = exposure_index(self.per_user_exposure, slot_duration)
        ref = max(abs(self.exposure_index), 1e-300)
        if abs(got - self.exposure_index) > 1e-12 * ref:
            raise ValueError("ExposureReport index does not match its per-user tensor")
        return True

    def per_user_index(self, slot_duration):
        """Per-user time-averaged exposure (duration * mean over slots)."""
        nt = self.per_user_exposure.shape[1]
        return slot_duration / nt * self.per_user_exposure.sum(axis=1)
