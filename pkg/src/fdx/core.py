"""Shared link parameters, constellations and pilot layouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class InvalidParams(ValueError):
    """Raised when a parameter set violates one or more link invariants."""

    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))


class UnknownConstellation(ValueError):
    pass


def db2lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SystemParams:
    """Deterministic scalars of one full-duplex OFDM link.

    Powers are linear. ``E_S`` and ``E_I`` are the powers of the whole
    SoI / SI symbol vectors, so each carrier carries ``E_S / N``.
    ``Q`` and ``K`` are derived; use :func:`validate_params` (or
    :meth:`from_db`) to fill them in.
    """

    N: int
    M: int
    L_I: int
    L_S: int
    E_S: float = 1.0
    E_I: float = 1.0
    E_hI: float = 1.0
    E_hS: float = 1.0
    sigma_w2: float = 1.0
    Q: Optional[int] = None
    K: Optional[int] = None

    @property
    def snr(self) -> float:
        return self.E_hS * self.E_S / self.sigma_w2

    @property
    def inr(self) -> float:
        return self.E_hI * self.E_I / self.sigma_w2

    @property
    def snr_db(self) -> float:
        return float(lin2db(self.snr))

    @property
    def inr_db(self) -> float:
        return float(lin2db(self.inr))

    @classmethod
    def from_db(cls, N, M, L_I, L_S, snr_db, inr_db, E_hS=1.0, E_hI=1.0):
        """Unit power per SoI carrier; noise and SI power set from the ratios."""
        E_S = float(N)
        sigma_w2 = E_hS * E_S / float(db2lin(snr_db))
        E_I = float(db2lin(inr_db)) * sigma_w2 / E_hI
        return validate_params(cls(N=N, M=M, L_I=L_I, L_S=L_S, E_S=E_S, E_I=E_I,
                                   E_hI=E_hI, E_hS=E_hS, sigma_w2=sigma_w2))

    def with_ratios(self, snr_db, inr_db) -> "SystemParams":
        return SystemParams.from_db(self.N, self.M, self.L_I, self.L_S, snr_db, inr_db,
                                    E_hS=self.E_hS, E_hI=self.E_hI)


def validate_params(p: SystemParams) -> SystemParams:
    """Fill in ``Q = N - M`` and ``K = M - L_S`` and check every invariant.

    All violations are collected into a single :class:`InvalidParams`.
    """
    reasons = []
    for name in ("N", "M", "L_I", "L_S"):
        v = getattr(p, name)
        if int(v) != v or v < 1:
            reasons.append(f"{name} must be a positive integer (got {v})")
    Q = p.N - p.M
    K = p.M - p.L_S
    if K <= 0:
        reasons.append(f"K = M - L_S = {K} must be >= 1")
    if Q < 0:
        reasons.append(f"Q = N - M = {Q} must be >= 0")
    if p.L_I + p.L_S + K > p.N:
        reasons.append(f"L_I + L_S + K = {p.L_I + p.L_S + K} exceeds N = {p.N}")
    for name in ("E_S", "E_I", "E_hI", "E_hS", "sigma_w2"):
        v = getattr(p, name)
        if not (v > 0):
            reasons.append(f"{name} must be > 0 (got {v})")
    if p.Q is not None and p.Q != Q:
        reasons.append(f"Q = {p.Q} inconsistent with N - M = {Q}")
    if p.K is not None and p.K != K:
        reasons.append(f"K = {p.K} inconsistent with M - L_S = {K}")
    if reasons:
        raise InvalidParams(reasons)
    return replace(p, Q=Q, K=K)


@dataclass(frozen=True)
class Constellation:
    """Equiprobable symbol alphabet with Gray bit labels.

    ``labels[i]`` is the bit pattern carried by ``points[i]`` and
    ``alpha[i, j]`` the number of bit errors when ``points[i]`` is sent
    and ``points[j]`` detected.
    """

    label: str
    points: np.ndarray
    labels: np.ndarray
    bits_per_symbol: int
    alpha: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.points)

    def bits(self, idx) -> np.ndarray:
        """Bit matrix (..., bits_per_symbol) of symbol indices."""
        lab = self.labels[np.asarray(idx)]
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return (lab[..., None] >> shifts) & 1

    def bit_errors(self, sent, detected) -> int:
        return int(self.alpha[np.asarray(sent), np.asarray(detected)].sum())


def _hamming_matrix(labels):
    x = np.bitwise_xor.outer(labels, labels)
    return np.array([[bin(int(v)).count("1") for v in row] for row in x], dtype=int)


def make_constellation(name: str, E_S: float, N: int) -> Constellation:
    """BPSK or Gray-labelled QPSK with per-symbol power ``E_S / N``."""
    amp = math.sqrt(E_S / N)
    key = name.upper()
    if key == "BPSK":
        points = np.array([amp, -amp], dtype=complex)
        labels = np.array([0, 1])
    elif key == "QPSK":
        # bit 1 (MSB) -> sign of real part, bit 0 -> sign of imaginary part
        s = amp / math.sqrt(2.0)
        points = np.array([s + 1j * s, s - 1j * s, -s + 1j * s, -s - 1j * s])
        labels = np.array([0, 1, 2, 3])
    else:
        raise UnknownConstellation(f"unknown constellation {name!r} (expected BPSK or QPSK)")
    bps = int(round(math.log2(len(points))))
    alpha = _hamming_matrix(labels)
    points.setflags(write=False)
    labels.setflags(write=False)
    alpha.setflags(write=False)
    return Constellation(label=key, points=points, labels=labels,
                         bits_per_symbol=bps, alpha=alpha)


@dataclass(frozen=True)
class PilotLayout:
    """Pilot/data subcarrier split; stands in for the bearer matrices."""

    pilot_indices: np.ndarray
    data_indices: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pilot_indices, dtype=np.intp)
        d = np.asarray(self.data_indices, dtype=np.intp)
        if np.intersect1d(p, d).size:
            raise ValueError("pilot and data indices overlap")
        if np.any(np.diff(p) <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("indices must be sorted and distinct")
        N = p.size + d.size
        if not np.array_equal(np.union1d(p, d), np.arange(N)):
            raise ValueError("pilot and data indices must cover 0..N-1")
        p.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "pilot_indices", p)
        object.__setattr__(self, "data_indices", d)

    @property
    def N(self) -> int:
        return self.pilot_indices.size + self.data_indices.size

    @property
    def M(self) -> int:
        return self.pilot_indices.size

    @property
    def Q(self) -> int:
        return self.data_indices.size

    def assemble(self, pilots, data) -> np.ndarray:
        """Scatter pilot and data symbols onto an N-carrier vector."""
        x = np.empty(self.N, dtype=complex)
        x[self.pilot_indices] = pilots
        x[self.data_indices] = data
        return x


def comb_layout(N: int, M: int) -> PilotLayout:
    """Pilots on every ``N // M``-th subcarrier starting at 0."""
    if not 0 < M <= N:
        raise ValueError(f"need 0 < M <= N, got M={M}, N={N}")
    pilots = np.arange(M) * (N // M)
    data = np.setdiff1d(np.arange(N), pilots)
    return PilotLayout(pilots, data)
