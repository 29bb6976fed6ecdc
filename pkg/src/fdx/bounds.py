"""Closed-form performance bounds of the iterative receiver.

MSE lower bounds on the phase-noise and SoI-channel estimates, effective
SINR upper bounds, the Rayleigh BPSK error function and the BER lower
bounds built on them.  Everything here is a pure function of
:class:`BoundsInput`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Constellation, SystemParams, make_constellation
from .phase_noise import PhaseNoiseSpec, lambda_I, lambda_S


class NegativeSINR(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class BoundsInput:
    params: SystemParams
    lambda_I: float
    lambda_S: float
    sigma_e2: float
    constellation: Constellation

    def __post_init__(self):
        for name in ("lambda_I", "lambda_S"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.sigma_e2 < self.params.sigma_w2 * (1.0 - 1e-12):
            raise ValueError(f"sigma_e2={self.sigma_e2} below sigma_w2={self.params.sigma_w2}")
        if self.params.K is None:
            raise ValueError("params must be validated (K and Q unset)")

    @classmethod
    def from_phase_noise(cls, params: SystemParams, pn: PhaseNoiseSpec,
                         constellation: Optional[Constellation] = None) -> "BoundsInput":
        """Evaluate the residual phase-noise powers for ``pn`` and form ``sigma_e2``."""
        if constellation is None:
            constellation = make_constellation("BPSK", params.E_S, params.N)
        lam_I = lambda_I(params.K, pn)
        lam_S = lambda_S(pn)
        s2 = lam_I * params.E_hI * params.E_I + lam_S * params.E_hS * params.E_S + params.sigma_w2
        return cls(params=params, lambda_I=lam_I, lambda_S=lam_S, sigma_e2=s2,
                   constellation=constellation)

    @property
    def soi_power(self) -> float:
        """Useful SoI power per detection, ``(1 - lambda_S) E_hS E_S``."""
        p = self.params
        return (1.0 - self.lambda_S) * p.E_hS * p.E_S

    def sigma_z2(self, d) -> float:
        """Noise power seen by the estimator given squared detection error ``d``."""
        return self.sigma_e2 + (1.0 - self.lambda_S) * self.params.E_hS * d


# ---------------------------------------------------------------------------
# MSE and SINR
# ---------------------------------------------------------------------------

def mse_lower_bounds(inp: BoundsInput, d):
    """``(C_lb, D_lb)`` for phase-noise and SoI-channel estimates after an error ``d``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("d must be >= 0")
    p = inp.params
    s2 = inp.sigma_z2(d)
    C = (p.M - p.L_S) * s2 / (p.N * p.E_hI * p.E_I)
    D = p.L_S * s2 / (p.N * p.E_S)
    if C.ndim == 0:
        return float(C), float(D)
    return C, D


def sinr_upper_bound(inp: BoundsInput, d_bar):
    """Effective SINR bound given a per-carrier squared detection error ``d_bar``.

    Obtained by putting the MSE bounds at ``d = Q d_bar`` into
    :func:`sinr_exact`; the detection-error term is therefore
    ``(M Q / N) (1 - lambda_S) E_hS d_bar``.
    """
    d_bar = np.asarray(d_bar, dtype=float)
    if np.any(d_bar < 0):
        raise ValueError("d_bar must be >= 0")
    p = inp.params
    den = ((1.0 + p.M / p.N) * inp.sigma_e2
           + (p.M * p.Q / p.N) * (1.0 - inp.lambda_S) * p.E_hS * d_bar)
    out = inp.soi_power / den
    return float(out) if out.ndim == 0 else out


def gamma0(inp: BoundsInput) -> float:
    return sinr_upper_bound(inp, 0.0)


def gamma1(inp: BoundsInput) -> float:
    """SINR bound after a BPSK decision error (``d_bar = 4 E_S / N``)."""
    return sinr_upper_bound(inp, 4.0 * inp.params.E_S / inp.params.N)


def gamma_matrix(inp: BoundsInput) -> np.ndarray:
    """``gamma[i, j]``: SINR bound when ``a_i`` was sent and ``a_j`` detected previously."""
    a = inp.constellation.points
    dist2 = np.abs(a[:, None] - a[None, :]) ** 2
    return sinr_upper_bound(inp, dist2)


def sinr_exact(inp: BoundsInput, C_n, D_n):
    """Effective SINR for given phase-noise / SoI-channel estimation MSEs."""
    if np.any(np.asarray(C_n) < 0) or np.any(np.asarray(D_n) < 0):
        raise ValueError("MSEs must be >= 0")
    p = inp.params
    den = np.asarray(C_n) * p.E_hI * p.E_I + np.asarray(D_n) * p.E_S + inp.sigma_e2
    out = inp.soi_power / den
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Error probabilities
# ---------------------------------------------------------------------------

def rayleigh_bpsk_ber(x):
    """BPSK error probability over Rayleigh fading at average SINR ``x``.

    ``0.5 * (1 - sqrt(x / (1 + x)))`` rewritten as
    ``0.5 / ((1 + x) (1 + sqrt(x / (1 + x))))`` to keep relative accuracy
    at large ``x``.  ``x = inf`` gives 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise NegativeSINR(f"SINR must be >= 0, got {x}")
    with np.errstate(invalid="ignore", over="ignore"):
        r = np.where(np.isinf(x), 1.0, x / (1.0 + x))
        out = np.where(np.isinf(x), 0.0, 0.5 / ((1.0 + x) * (1.0 + np.sqrt(r))))
    return float(out) if out.ndim == 0 else out


def ber_bound_from_gammas(g0, g1) -> float:
    """``f(g0) / (1 + f(g0) - f(g1))``."""
    if g1 > g0 * (1.0 + 1e-12):
        raise ValueError(f"need gamma0 >= gamma1, got {g0} < {g1}")
    f0 = rayleigh_bpsk_ber(g0)
    f1 = rayleigh_bpsk_ber(g1)
    return f0 / (1.0 + f0 - f1)


def ber_lower_bound_bpsk(inp: BoundsInput) -> float:
    return ber_bound_from_gammas(gamma0(inp), gamma1(inp))


def ber_recursion(f0: float, f1: float, tol: float = 1e-15, max_iter: int = 100_000) -> float:
    """Fixed point of ``P <- (1 - P) f0 + P f1`` iterated from ``P = f0``."""
    P = f0
    for _ in range(max_iter):
        nxt = (1.0 - P) * f0 + P * f1
        if abs(nxt - P) <= tol:
            return nxt
        P = nxt
    raise NoConvergence("BER recursion did not settle", abs(nxt - P))


ErrorFn = Callable[[int, int, np.ndarray], np.ndarray]


def bpsk_error_functions() -> ErrorFn:
    """``f_ij(gamma)``: probability of deciding ``j`` when ``i`` was sent."""

    def f(i, j, gamma):
        p = rayleigh_bpsk_ber(gamma)
        return 1.0 - p if i == j else p

    return f


def qpsk_error_functions(constellation: Constellation) -> ErrorFn:
    """Gray QPSK transition probabilities from per-axis Rayleigh error rates.

    Each axis is a BPSK decision at half the symbol SINR.  The two axes are
    treated as independent, which ignores that they share one fading
    coefficient; this is an approximation, not an exact QPSK result.
    """
    bits = constellation.bits(np.arange(constellation.T))

    def f(i, j, gamma):
        p = rayleigh_bpsk_ber(np.asarray(gamma, dtype=float) / 2.0)
        out = 1.0
        for b in range(bits.shape[1]):
            out = out * (p if bits[i, b] != bits[j, b] else 1.0 - p)
        return out

    return f


def default_error_functions(constellation: Constellation) -> ErrorFn:
    if constellation.T == 2:
        return bpsk_error_functions()
    if constellation.T == 4:
        return qpsk_error_functions(constellation)
    raise ValueError(f"no default error functions for T={constellation.T}")


def transition_matrices(inp: BoundsInput, f_ij: ErrorFn) -> np.ndarray:
    """``F[i, j, q] = f_ij(gamma[i, q])``."""
    G = gamma_matrix(inp)
    T = G.shape[0]
    F = np.empty((T, T, T))
    for i in range(T):
        for j in range(T):
            F[i, j] = f_ij(i, j, G[i])
    return F


def solve_general_ber_bound(inp: BoundsInput, f_ij: Optional[ErrorFn] = None,
                            tol: float = 1e-12, max_iter: int = 10_000):
    """Detection-probability fixed point and the resulting BER bound.

    For each sent symbol ``i`` the row ``P[i, :]`` solves ``P_i = F_i P_i``
    (the transition inequalities taken at equality), scaled to sum to the
    prior ``1 / T``.  Returns ``(P, ber_lb)``.
    """
    c = inp.constellation
    if f_ij is None:
        f_ij = default_error_functions(c)
    F = transition_matrices(inp, f_ij)
    T = c.T
    P = np.empty((T, T))
    for i in range(T):
        v = np.full(T, 1.0 / T)
        for _ in range(max_iter):
            nxt = F[i] @ v
            s = nxt.sum()
            if not s > 0:
                raise NoConvergence(f"row {i} collapsed to zero")
            nxt /= s
            delta = float(np.max(np.abs(nxt - v)))
            v = nxt
            if delta < tol:
                break
        else:
            raise NoConvergence(f"row {i} did not converge in {max_iter} iterations", delta)
        P[i] = v / T
    ber = float(np.sum(c.alpha * P) / math.log2(T))
    return P, ber


def constraint_residuals(inp: BoundsInput, P, f_ij: Optional[ErrorFn] = None) -> np.ndarray:
    """``P[i, j] - sum_q f_ij(gamma[i, q]) P[i, q]``; zero at the fixed point."""
    if f_ij is None:
        f_ij = default_error_functions(inp.constellation)
    F = transition_matrices(inp, f_ij)
    return np.asarray(P) - np.einsum("ijq,iq->ij", F, np.asarray(P))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundsReport:
    """All bounds for one operating point.

    ``C_lb`` / ``D_lb`` are affine in ``d``; the coefficients are stored so
    the report serializes, and the methods evaluate them.
    """

    lambda_I: float
    lambda_S: float
    sigma_e2: float
    C_coef: tuple
    D_coef: tuple
    gamma0: float
    gamma1: float
    gamma_ij: np.ndarray
    ber_lb_bpsk: float
    P_ij: np.ndarray
    ber_lb_general: float

    def C_lb(self, d):
        return self.C_coef[0] + self.C_coef[1] * np.asarray(d, dtype=float)

    def D_lb(self, d):
        return self.D_coef[0] + self.D_coef[1] * np.asarray(d, dtype=float)

    @property
    def gamma0_db(self) -> float:
        return 10.0 * math.log10(self.gamma0)

    @property
    def gamma1_db(self) -> float:
        return 10.0 * math.log10(self.gamma1)

    def to_dict(self) -> dict:
        return {
            "lambda_I": self.lambda_I, "lambda_S": self.lambda_S, "sigma_e2": self.sigma_e2,
            "C_coef": list(self.C_coef), "D_coef": list(self.D_coef),
            "gamma0": self.gamma0, "gamma1": self.gamma1,
            "gamma_ij": self.gamma_ij.tolist(), "ber_lb_bpsk": self.ber_lb_bpsk,
            "P_ij": self.P_ij.tolist(), "ber_lb_general": self.ber_lb_general,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    CSV_FIELDS = ("lambda_I", "lambda_S", "sigma_e2", "gamma0", "gamma1", "gamma0_db",
                  "gamma1_db", "ber_lb_bpsk", "ber_lb_general")

    def csv_row(self) -> list:
        return [repr(float(getattr(self, k))) for k in self.CSV_FIELDS]


def bounds_report(inp: BoundsInput, f_ij: Optional[ErrorFn] = None) -> BoundsReport:
    c0, d0 = mse_lower_bounds(inp, 0.0)
    c1, d1 = mse_lower_bounds(inp, 1.0)
    P, ber = solve_general_ber_bound(inp, f_ij)
    return BoundsReport(
        lambda_I=inp.lambda_I, lambda_S=inp.lambda_S, sigma_e2=inp.sigma_e2,
        C_coef=(c0, c1 - c0), D_coef=(d0, d1 - d0),
        gamma0=gamma0(inp), gamma1=gamma1(inp), gamma_ij=gamma_matrix(inp),
        ber_lb_bpsk=ber_lower_bound_bpsk(inp), P_ij=P, ber_lb_general=ber)
