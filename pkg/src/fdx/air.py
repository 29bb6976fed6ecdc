"""Channel/symbol generation and the frequency-domain received signal.

Frequency responses are ``H[k] = sum_l h(l) exp(-j 2 pi k l / N)``, i.e.
``sqrt(N) * dft_submatrix(N, L) @ h``, so that ``E|H[k]|^2 = E||h||^2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .core import Constellation, PilotLayout, SystemParams
from .phase_noise import PhaseNoiseSpec, circular_convolve, draw_link_phases


@dataclass(frozen=True)
class ChannelImpulse:
    taps: np.ndarray
    total_power: float

    @property
    def L(self) -> int:
        return self.taps.size


def gen_channel(L: int, E_h: float, seed=None) -> ChannelImpulse:
    """Rayleigh taps with a uniform power-delay profile (variance ``E_h / L`` each)."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not E_h > 0:
        raise ValueError(f"E_h must be > 0, got {E_h}")
    rng = np.random.default_rng(seed)
    taps = crandn(rng, L) * math.sqrt(E_h / L)
    return ChannelImpulse(taps=taps, total_power=float(E_h))


def crandn(rng, *shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def dft_submatrix(N: int, L: int) -> np.ndarray:
    """First L columns of the unitary N-point DFT matrix."""
    if L > N:
        raise ValueError(f"L={L} exceeds N={N}")
    n = np.arange(N)[:, None]
    l = np.arange(L)[None, :]
    return np.exp(-2j * math.pi * n * l / N) / math.sqrt(N)


def freq_matrix(N: int, L: int) -> np.ndarray:
    """Tap-to-carrier map, ``sqrt(N) * dft_submatrix(N, L)``."""
    return dft_submatrix(N, L) * math.sqrt(N)


def freq_response(h, N: int) -> np.ndarray:
    return np.fft.fft(np.asarray(h), N, axis=-1)


def shift_matrix(g, K: int) -> np.ndarray:
    """First K columns of the circulant with first column ``g``."""
    N = g.shape[-1]
    idx = (np.arange(N)[:, None] - np.arange(K)[None, :]) % N
    return g[..., idx]


def build_T_I(h_I, x_I, N: int | None = None) -> np.ndarray:
    """Circulant ``T[m, n] = H_I[m-n] X_I[m-n]`` (indices mod N).

    ``T @ j`` equals ``J @ diag(H_I) @ x_I`` for the circulant ``J`` built
    from ``j``.
    """
    x_I = np.asarray(x_I)
    N = x_I.shape[-1] if N is None else N
    taps = h_I.taps if isinstance(h_I, ChannelImpulse) else h_I
    g = freq_response(taps, N) * x_I
    return shift_matrix(g, N)


@dataclass(frozen=True)
class LinkRealization:
    """Ground truth of one received OFDM symbol.

    ``data_symbols`` holds constellation indices of the data carriers
    (empty for an all-pilot symbol).
    """

    h_I: np.ndarray
    h_S: np.ndarray
    h_D: np.ndarray
    x_I: np.ndarray
    x_S: np.ndarray
    data_symbols: np.ndarray
    J_I: np.ndarray
    J_S: np.ndarray
    w: np.ndarray
    y: np.ndarray

    @property
    def N(self) -> int:
        return self.y.size

    def j_prime(self, K: int) -> np.ndarray:
        return self.J_I[:K]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = np.asarray(getattr(self, f.name))
            if np.iscomplexobj(v):
                out[f.name] = [[float(z.real), float(z.imag)] for z in v]
            else:
                out[f.name] = v.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LinkRealization":
        kw = {}
        for f in fields(cls):
            v = d[f.name]
            if f.name == "data_symbols":
                kw[f.name] = np.asarray(v, dtype=np.intp)
            else:
                arr = np.asarray(v, dtype=float).reshape(-1, 2)
                kw[f.name] = arr[:, 0] + 1j * arr[:, 1]
        return cls(**kw)


def dump_link(link: LinkRealization, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(link.to_dict(), fh)


def load_link(path) -> LinkRealization:
    with open(path, encoding="utf-8") as fh:
        return LinkRealization.from_dict(json.load(fh))


def pilot_values(params: SystemParams, M: int) -> np.ndarray:
    return np.full(M, math.sqrt(params.E_S / params.N), dtype=complex)


def received_signal(J_I, H_I, x_I, J_S, H_S, x_S, w) -> np.ndarray:
    return circular_convolve(J_I, H_I * x_I) + circular_convolve(J_S, H_S * x_S) + w


def synthesize(params: SystemParams, layout: PilotLayout, constellation: Constellation,
               pn: PhaseNoiseSpec, seed=None, h_I=None, all_pilots=False) -> LinkRealization:
    """Draw one symbol and form ``y = J_I H_I x_I + J_S H_S x_S + w``.

    ``h_I`` may be passed to keep the SI channel fixed across symbols of a
    frame.  With ``all_pilots`` every carrier carries the known pilot value.
    """
    rng = np.random.default_rng(seed)
    N = params.N
    if h_I is None:
        h_I = gen_channel(params.L_I, params.E_hI, rng).taps
    h_S = gen_channel(params.L_S, params.E_hS, rng).taps
    si_scale = math.sqrt(params.E_I / params.E_S)
    x_I = constellation.points[rng.integers(constellation.T, size=N)] * si_scale
    if all_pilots:
        x_S = pilot_values(params, N)
        data = np.empty(0, dtype=np.intp)
    else:
        data = rng.integers(constellation.T, size=layout.Q)
        x_S = layout.assemble(pilot_values(params, layout.M), constellation.points[data])
    if pn.N != N:
        raise ValueError(f"phase-noise spec has N={pn.N}, link has N={N}")
    J_I, J_S = draw_link_phases(pn, rng)
    w = crandn(rng, N) * math.sqrt(params.sigma_w2 / N)
    H_I = freq_response(h_I, N)
    H_S = freq_response(h_S, N)
    y = received_signal(J_I, H_I, x_I, J_S, H_S, x_S, w)
    return LinkRealization(h_I=np.asarray(h_I), h_S=h_S, h_D=J_S[0] * h_S, x_I=x_I, x_S=x_S,
                           data_symbols=data, J_I=J_I, J_S=J_S, w=w, y=y)


def modeling_error(link: LinkRealization, K: int) -> np.ndarray:
    """``e = T_I (j_I - S_I j_I') + (J_S H_S - H_D) x_S + w``."""
    N = link.N
    j_tail = link.J_I.copy()
    j_tail[:K] = 0.0
    g = freq_response(link.h_I, N) * link.x_I
    soi = freq_response(link.h_S, N) * link.x_S
    j_ici = link.J_S.copy()
    j_ici[0] = 0.0
    return circular_convolve(j_tail, g) + circular_convolve(j_ici, soi) + link.w


def sigma_e2(params: SystemParams, lambda_I: float, lambda_S: float) -> float:
    """Power of the approximation error plus receiver noise."""
    if not (0.0 <= lambda_I <= 1.0 and 0.0 <= lambda_S <= 1.0):
        raise ValueError("lambda values must lie in [0, 1]")
    return (lambda_I * params.E_hI * params.E_I + lambda_S * params.E_hS * params.E_S
            + params.sigma_w2)
