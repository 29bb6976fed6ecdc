"""Wiener phase noise: trajectories, DFT coefficients and residual powers.

Convention: ``sigma_theta2`` is the exponent of the phasor autocorrelation
``E[exp(j(phi_p - phi_q))] = exp(-sigma_theta2 * |p - q|)`` of the phase
that multiplies a link, i.e. the transmit + receive oscillator pair.  Each
individual oscillator is therefore a random walk whose increments have
variance ``sigma_theta2``, and the pair has increments of variance
``2 * sigma_theta2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class LengthMismatch(ValueError):
    pass


class DegenerateVariance(ValueError):
    pass


class OscillatorMode(str, enum.Enum):
    SEPARATE = "separate"
    COMMON = "common"


@dataclass(frozen=True)
class PhaseNoiseSpec:
    delta_f: float
    N: int
    sigma_theta2: float
    oscillator_mode: OscillatorMode = OscillatorMode.SEPARATE
    alpha_I: int = 0

    def __post_init__(self):
        if self.delta_f < 0 or self.sigma_theta2 < 0 or self.alpha_I < 0:
            raise ValueError("delta_f, sigma_theta2 and alpha_I must be non-negative")
        object.__setattr__(self, "oscillator_mode", OscillatorMode(self.oscillator_mode))

    @classmethod
    def from_delta_f(cls, delta_f, N, oscillator_mode=OscillatorMode.SEPARATE, alpha_I=0):
        """Per-sample variance ``4 pi delta_f / N``."""
        return cls(delta_f=delta_f, N=N, sigma_theta2=4.0 * math.pi * delta_f / N,
                   oscillator_mode=oscillator_mode, alpha_I=alpha_I)

    def oscillator(self) -> "PhaseNoiseSpec":
        """Spec of a single oscillator, half the pair's autocorrelation exponent."""
        return replace(self, sigma_theta2=self.sigma_theta2 / 2.0)


def gen_wiener(spec: PhaseNoiseSpec, seed=None, length=None, size=None) -> np.ndarray:
    """Random walk with ``theta[..., 0] = 0`` and N(0, 2*sigma_theta2) increments.

    ``size`` prepends batch dimensions; ``length`` defaults to ``spec.N``.
    """
    rng = np.random.default_rng(seed)
    n = spec.N if length is None else int(length)
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (n,)
    theta = np.zeros(shape)
    if spec.sigma_theta2 > 0 and n > 1:
        steps = rng.standard_normal(shape[:-1] + (n - 1,)) * math.sqrt(2.0 * spec.sigma_theta2)
        np.cumsum(steps, axis=-1, out=theta[..., 1:])
    return theta


def phase_to_spectrum(theta_tx, theta_rx, delay=0, N=None) -> np.ndarray:
    """DFT coefficients ``J[k]`` of ``exp(j(theta_tx(n - delay) + theta_rx(n)))``.

    Both traces are sampled on a common grid whose index ``delay``
    corresponds to time 0 (the transmit trace reaches ``delay`` samples
    into the past).  Leading axes are treated as a batch.
    """
    theta_tx = np.asarray(theta_tx, dtype=float)
    theta_rx = np.asarray(theta_rx, dtype=float)
    delay = int(delay)
    if N is None:
        N = theta_rx.shape[-1] - delay
    if N < 1 or delay < 0:
        raise LengthMismatch(f"invalid N={N} / delay={delay}")
    if theta_tx.shape[-1] < N + delay or theta_rx.shape[-1] < N + delay:
        raise LengthMismatch(
            f"traces of length {theta_tx.shape[-1]} / {theta_rx.shape[-1]} "
            f"are shorter than N + delay = {N + delay}")
    phase = theta_tx[..., :N] + theta_rx[..., delay:delay + N]
    return np.fft.fft(np.exp(1j * phase), axis=-1) / N


def spectrum_to_matrix(j) -> np.ndarray:
    """Circulant matrix with entry (m, n) = ``j[(m - n) mod N]``."""
    j = np.asarray(j)
    N = j.shape[-1]
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return j[..., idx]


def circular_convolve(j, g) -> np.ndarray:
    """``spectrum_to_matrix(j) @ g`` without forming the matrix."""
    return np.fft.ifft(np.fft.fft(j, axis=-1) * np.fft.fft(g, axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# Analytic per-carrier powers
# ---------------------------------------------------------------------------

def separate_lag_exponent(lags, spec: PhaseNoiseSpec) -> np.ndarray:
    """Exponent g(d) with ``E[e^{j(phi_p - phi_q)}] = exp(-sigma_theta2 g(|p-q|))``."""
    return np.abs(np.asarray(lags, dtype=float))


def common_lag_exponent(lags, spec: PhaseNoiseSpec) -> np.ndarray:
    """Exponent for a shared oscillator seen at delays 0 and ``alpha_I``.

    For lag ``d < alpha`` the two windows are disjoint (exponent ``d``);
    otherwise they overlap on ``d - alpha`` samples whose increments add
    coherently, giving ``alpha + 2 (d - alpha)``.
    """
    d = np.abs(np.asarray(lags, dtype=float))
    a = float(spec.alpha_I)
    return np.where(d < a, d, 2.0 * d - a)


def _lag_exponent(spec: PhaseNoiseSpec):
    if spec.oscillator_mode is OscillatorMode.COMMON:
        return common_lag_exponent
    return separate_lag_exponent


def _excess_power(spec: PhaseNoiseSpec, exponent) -> np.ndarray:
    """``E|J[k]|^2 - delta[k]`` for all k, evaluated without cancellation.

    Uses the lag form of the double sum,
    ``(1/N^2) sum_d (N - |d|) R(d) e^{-j 2 pi k d / N}``, with ``R - 1``
    computed through ``expm1``.
    """
    N = spec.N
    if N == 1:
        return np.zeros(1)
    n = np.arange(1, N)
    r_minus_1 = np.expm1(-spec.sigma_theta2 * exponent(n, spec))
    w = (N - n) * r_minus_1
    k = np.arange(N)
    cos = np.cos(2.0 * math.pi * np.outer(k, n) / N)
    return (2.0 / N ** 2) * (cos @ w)


def carrier_powers(spec: PhaseNoiseSpec, mode=None) -> np.ndarray:
    """Expected ``|J[k]|^2`` for k = 0..N-1.

    ``mode`` selects the SI link model (defaults to ``spec.oscillator_mode``);
    the SoI link always behaves as separate oscillators.
    """
    if mode is not None:
        spec = replace(spec, oscillator_mode=OscillatorMode(mode))
    g = _excess_power(spec, _lag_exponent(spec))
    g[0] += 1.0
    return g


def _lambda(spec: PhaseNoiseSpec, K: int) -> float:
    if not 1 <= K <= spec.N:
        raise ValueError(f"K must lie in 1..N, got {K}")
    excess = _excess_power(spec, _lag_exponent(spec))
    # sum_k excess[k] == 0, so 1 - sum_{k<K} E|J[k]|^2 == -sum_{k<K} excess[k]
    lam = -float(np.sum(excess[:K]))
    return min(max(lam, 0.0), 1.0)


def lambda_separate(K: int, spec: PhaseNoiseSpec) -> float:
    """Power left outside the first K coefficients, independent oscillators."""
    return _lambda(replace(spec, oscillator_mode=OscillatorMode.SEPARATE), K)


def lambda_common(K: int, spec: PhaseNoiseSpec) -> float:
    """Same as :func:`lambda_separate` for a transmitter/receiver sharing one oscillator."""
    return _lambda(replace(spec, oscillator_mode=OscillatorMode.COMMON), K)


def lambda_I(K: int, spec: PhaseNoiseSpec) -> float:
    return _lambda(spec, K)


def lambda_S(spec: PhaseNoiseSpec) -> float:
    # remote oscillator is independent of the local receiver in either mode
    return lambda_separate(1, spec)


def cpe_power_closed_form(N: int, sigma_theta2: float) -> float:
    """Closed-form ``E|J[0]|^2`` for independent oscillators.

    ``(1/N^2) [2 (e^{-(N+1)s} - (N+1) e^{-s} + N) / (e^{-s} - 1)^2 - N]``,
    with the numerator rewritten as ``expm1(-(N+1)s) - (N+1) expm1(-s)``
    (both leading terms cancel otherwise).
    """
    s = float(sigma_theta2)
    if s <= 0:
        raise DegenerateVariance("closed form is 0/0 at sigma_theta2 = 0; lambda_S -> 0")
    a = math.expm1(-s)
    num = math.expm1(-(N + 1) * s) - (N + 1) * a
    return (2.0 * num / (a * a) - N) / N ** 2


def lambda_S_closed_form(N: int, sigma_theta2: float):
    """Return ``(lambda_S, raw)`` where ``raw`` is the closed-form expression itself."""
    raw = cpe_power_closed_form(N, sigma_theta2)
    return 1.0 - raw, raw


def draw_link_phases(spec: PhaseNoiseSpec, rng, size=None):
    """One symbol of SI and SoI phase-noise spectra ``(J_I, J_S)``.

    Separate mode draws independent local transmit, local receive and
    remote transmit oscillators.  Common mode reuses the local oscillator
    for transmit and receive, with the SI path delayed by ``alpha_I``.
    """
    osc = spec.oscillator()
    N = spec.N
    if spec.oscillator_mode is OscillatorMode.COMMON:
        a = int(spec.alpha_I)
        theta_loc = gen_wiener(osc, rng, length=N + a, size=size)
        theta_rem = gen_wiener(osc, rng, length=N, size=size)
        J_I = phase_to_spectrum(theta_loc, theta_loc, delay=a, N=N)
        J_S = phase_to_spectrum(theta_rem, theta_loc[..., a:], delay=0, N=N)
    else:
        theta_tx = gen_wiener(osc, rng, length=N, size=size)
        theta_rx = gen_wiener(osc, rng, length=N, size=size)
        theta_rem = gen_wiener(osc, rng, length=N, size=size)
        J_I = phase_to_spectrum(theta_tx, theta_rx)
        J_S = phase_to_spectrum(theta_rem, theta_rx)
    return J_I, J_S
