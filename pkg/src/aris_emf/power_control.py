"""Per-user transmit power across assigned resource elements.

One user's subproblem: minimize the exposure sum SAR_n * p_n over its
elements subject to a total-rate floor and a total-power cap.  Stationarity
gives water-filling-like powers

    p_n = max{ nu / (SAR_n + lam) - sigma2 / gamma_n, 0 },

with nu = w*mu/ln2 the rate multiplier's water level and lam the power-cap
multiplier.  The rate floor always binds, so nu is found by bisection with
lam = 0; only when that solution overshoots the cap is the full (nu, lam)
system solved (damped Newton, nested bisection as fallback: the total power
at rate equality is non-increasing in lam, a Pareto-scalarization fact).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex_kernels import bisect, newton_solve
from .exposure import InfeasibleError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PowerAllocation:
    """One user's per-element powers and the multipliers that produced them."""

    powers: np.ndarray
    mu: float
    lam: float

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float)
        if np.any(p < 0):
            raise ValueError("negative transmit power")
        if self.mu < 0 or self.lam < 0:
            raise ValueError("multipliers must be non-negative")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)

    @property
    def total(self):
        return float(self.powers.sum())


def optimal_power_formula(mu, lam, sar, gamma, sigma2, w, delta):
    """max{delta*w*mu/(ln2*(sar+lam)) - delta*sigma2/gamma, 0}, elementwise."""
    delta = np.asarray(delta, dtype=float)
    bracket = w * mu / (LN2 * (np.asarray(sar, dtype=float) + lam)) \
        - sigma2 / np.asarray(gamma, dtype=float)
    out = np.maximum(delta * bracket, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _powers_at(nu, lam, sar, snr_per_watt):
    """Stationary powers at water level nu = w*mu/ln2 (vector over elements)."""
    return np.maximum(nu / (sar + lam) - 1.0 / snr_per_watt, 0.0)


def _norm_rate(p, snr_per_watt):
    """Sum of log2(1 + p*gamma/sigma2): the user rate in units of w."""
    return float(np.sum(np.log2(1.0 + p * snr_per_watt)))


def _rate_max_waterfill(snr_per_watt, p_max):
    """Rate-maximizing powers under a total-power budget (equal weights)."""
    inv = 1.0 / snr_per_watt

    def spent(level):
        return float(np.maximum(level - inv, 0.0).sum()) - p_max

    hi = inv.min() + p_max  # water at this level costs at least p_max
    level = bisect(spent, 0.0, hi, tol=1e-15 * max(1.0, hi))
    return np.maximum(level - inv, 0.0)


def solve_multipliers(gamma, sar, rate_target, p_max, sigma2, w):
    """Multipliers (mu*, lam*) of one user's exposure-minimal power problem.

    gamma/sar: per-element gains and reference exposures of the user's
    assigned elements (all positive).  Raises InfeasibleError when even the
    rate-optimal spend of p_max cannot reach rate_target.
    """
    gamma = np.asarray(gamma, dtype=float)
    sar = np.asarray(sar, dtype=float)
    if gamma.size == 0:
        raise InfeasibleError("no resource elements to carry a positive rate")
    if np.any(gamma <= 0):
        raise InfeasibleError("zero channel gain on an assigned resource element")
    if np.any(sar <= 0):
        raise ValueError("reference exposure must be positive")
    snr_per_watt = gamma / sigma2
    target = rate_target / w
    if target <= 0:
        return 0.0, 0.0

    best = _rate_max_waterfill(snr_per_watt, p_max)
    if _norm_rate(best, snr_per_watt) < target * (1.0 - 1e-12):
        raise InfeasibleError(
            f"rate target {rate_target:.6g} bit/s exceeds the {p_max:.3g} W budget")

    def rate_gap(nu, lam):
        return _norm_rate(_powers_at(nu, lam, sar, snr_per_watt), snr_per_watt) - target

    # rate floor with the cap ignored: bisect the water level
    hi = float(sar.max()) * (1.0 / snr_per_watt.min() + p_max)
    while rate_gap(hi, 0.0) < 0:
        hi *= 2.0
    nu = bisect(lambda v: rate_gap(v, 0.0), 0.0, hi, tol=1e-15 * hi)
    p = _powers_at(nu, 0.0, sar, snr_per_watt)
    if p.sum() <= p_max * (1.0 + 1e-12):
        return nu * LN2 / w, 0.0

    # cap binds: solve rate and power equality in (nu, lam) jointly
    def residual(x):
        nu_x, lam_x = x
        if nu_x <= 0 or lam_x < 0:
            return np.array([np.inf, np.inf])
        px = _powers_at(nu_x, lam_x, sar, snr_per_watt)
        return np.array([_norm_rate(px, snr_per_watt) - target,
                         (px.sum() - p_max) / p_max])

    def jacobian(x):
        nu_x, lam_x = x
        px = _powers_at(nu_x, lam_x, sar, snr_per_watt)
        active = px > 0
        weight = sar[active] + lam_x
        dp_dnu = 1.0 / weight
        dp_dlam = -nu_x / weight ** 2
        dr_dp = snr_per_watt[active] / (LN2 * (1.0 + px[active] * snr_per_watt[active]))
        return np.array([[float(dr_dp @ dp_dnu), float(dr_dp @ dp_dlam)],
                         [float(dp_dnu.sum()) / p_max, float(dp_dlam.sum()) / p_max]])

    x, ok = newton_solve(residual, jacobian, np.array([nu, float(sar.mean())]),
                         tol=1e-12)
    if ok and x[0] > 0 and x[1] >= 0:
        return float(x[0]) * LN2 / w, float(x[1])

    # fallback: total power at rate equality is non-increasing in lam
    def spend_at(lam):
        hi_l = float((sar.max() + lam) * (1.0 / snr_per_watt.min() + p_max))
        nu_l = bisect(lambda v: rate_gap(v, lam), 0.0, hi_l, tol=1e-15 * hi_l)
        return nu_l, float(_powers_at(nu_l, lam, sar, snr_per_watt).sum())

    lam_hi = float(sar.mean())
    while spend_at(lam_hi)[1] > p_max:
        lam_hi *= 2.0
        if lam_hi > 1e18 * sar.mean():
            raise InfeasibleError("power cap is attainable only in the limit; "
                                  "rate target sits on the feasibility boundary")
    lam = bisect(lambda l: spend_at(l)[1] - p_max, 0.0, lam_hi,
                 tol=1e-15 * lam_hi)
    nu = spend_at(lam)[0]
    return nu * LN2 / w, lam


def allocate_power(delta_row, gamma_row, sar_row, rate_target, p_max, sigma2, w,
                   user=None):
    """Powers and per-element rate shares for one user across one slot.

    delta_row/gamma_row/sar_row: (N_c,) allocation mask, gains, and reference
    exposures.  Returns (PowerAllocation, rbar_row) with rbar the per-element
    rate shares summing to rate_target.
    """
    delta_row = np.asarray(delta_row, dtype=float)
    gamma_row = np.asarray(gamma_row, dtype=float)
    sar_row = np.asarray(sar_row, dtype=float)
    n_res = delta_row.size
    label = f"user {user}" if user is not None else "user"
    powers = np.zeros(n_res)
    shares = np.zeros(n_res)
    if rate_target <= 0:
        return PowerAllocation(powers, 0.0, 0.0), shares

    usable = (delta_row > 0) & (gamma_row > 0)
    if not np.any(usable):
        raise InfeasibleError(f"{label} has no usable resource element "
                              f"for a {rate_target:.6g} bit/s target")
    try:
        mu, lam = solve_multipliers(gamma_row[usable], sar_row[usable],
                                    rate_target, p_max, sigma2, w)
    except InfeasibleError as exc:
        raise InfeasibleError(f"{label}: {exc}") from None
    nu = w * mu / LN2
    p = _powers_at(nu, lam, sar_row[usable], gamma_row[usable] / sigma2)
    powers[usable] = p
    shares[usable] = w * np.log2(1.0 + p * gamma_row[usable] / sigma2)

    achieved = float(shares.sum())
    if achieved < rate_target * (1.0 - 1e-6) or powers.sum() > p_max * (1.0 + 1e-9):
        raise ArithmeticError(
            f"multiplier solve left {label} at {achieved:.6g} of "
            f"{rate_target:.6g} bit/s with {powers.sum():.3g} W spent")
    return PowerAllocation(powers, mu, lam), shares
