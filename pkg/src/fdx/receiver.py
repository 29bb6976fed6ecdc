"""Two-stage joint SI cancellation and data detection.

Stage 1 runs on an all-pilot symbol and alternates least-squares updates of
the SI channel, the CPE-rotated SoI channel and the truncated SI phase-noise
vector.  Stage 2 runs on pilot+data symbols: cancel SI, detect the data per
carrier, then re-estimate the phase noise and the SoI channel from the
reconstructed symbol.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .air import LinkRealization, freq_matrix, freq_response, pilot_values, shift_matrix
from .core import Constellation, PilotLayout, SystemParams

RCOND = 1e-10


class SingularSystem(np.linalg.LinAlgError):
    pass


class ZeroChannelWarning(RuntimeWarning):
    pass


def lstsq(A, b):
    """Least squares via SVD; rank judged relative to the largest singular value."""
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=RCOND)
    if rank < A.shape[1]:
        raise SingularSystem(f"design matrix {A.shape} has numerical rank {rank}")
    return x


def unit_vector(K: int) -> np.ndarray:
    e = np.zeros(K, dtype=complex)
    e[0] = 1.0
    return e


@dataclass(frozen=True)
class ReceiverState:
    h_I_hat: np.ndarray
    j_I_hat: np.ndarray
    h_D_hat: np.ndarray
    x_d_idx: Optional[np.ndarray] = None

    def x_d_hat(self, constellation: Constellation):
        if self.x_d_idx is None:
            return None
        return constellation.points[self.x_d_idx]


# ---------------------------------------------------------------------------
# Stage 1
# ---------------------------------------------------------------------------

def stage1_estimate(y, x_I, x_S, params: SystemParams, iters: int = 4,
                    residuals: Optional[list] = None) -> ReceiverState:
    """Alternating LS for ``(h_I, h_D, j_I')`` on a fully known SoI symbol.

    Starts from ``j_I' = e_0``.  Given ``j_I'`` the model is linear in
    ``(h_I, h_D)`` jointly, so each alternation solves those two blocks
    together and then ``j_I'`` given both.  Only the product of ``h_I`` and
    the phase noise is identifiable, so the result is scaled to
    ``j_I'[0] = 1`` (the CPE of this symbol is absorbed into ``h_I``).
    If ``residuals`` is a list, the objective after every block update is
    appended to it.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    N, K, L_I = params.N, params.K, params.L_I
    A_D = x_S[:, None] * freq_matrix(N, params.L_S)
    XF_I = x_I[:, None] * freq_matrix(N, L_I)
    j = unit_vector(K)

    def objective(h_I, h_D, j):
        g = freq_response(h_I, N) * x_I
        return float(np.sum(np.abs(y - shift_matrix(g, K) @ j - A_D @ h_D) ** 2))

    for _ in range(iters):
        j_full = np.zeros(N, dtype=complex)
        j_full[:K] = j
        A_I = np.fft.ifft(np.fft.fft(j_full)[:, None] * np.fft.fft(XF_I, axis=0), axis=0)
        sol = lstsq(np.hstack([A_I, A_D]), y)
        h_I, h_D = sol[:L_I], sol[L_I:]
        if residuals is not None:
            residuals.append(objective(h_I, h_D, j))
        O = shift_matrix(freq_response(h_I, N) * x_I, K)
        j = lstsq(O, y - A_D @ h_D)
        if residuals is not None:
            residuals.append(objective(h_I, h_D, j))
    # (c * j, h / c) fit equally well; fix the CPE into h_I so that j[0] = 1
    c = j[0]
    if abs(c) > 0:
        j = j / c
        h_I = h_I * c
    return ReceiverState(h_I_hat=h_I, j_I_hat=j, h_D_hat=h_D)


# ---------------------------------------------------------------------------
# Stage 2
# ---------------------------------------------------------------------------

def si_design(h_I_hat, x_I, K: int) -> np.ndarray:
    """``O = T_I S_I``: the first K circular shifts of ``H_I * x_I``."""
    g = freq_response(h_I_hat, x_I.shape[-1]) * x_I
    return shift_matrix(g, K)


def cancel_si(y, h_I_hat, x_I, j_I_hat, layout: PilotLayout) -> np.ndarray:
    """Data-carrier samples after subtracting the reconstructed SI."""
    O = si_design(h_I_hat, x_I, len(j_I_hat))
    return (y - O @ j_I_hat)[layout.data_indices]


def detect_ml(r, h_D_hat, layout: PilotLayout, constellation: Constellation) -> np.ndarray:
    """Per-carrier ML decision; returns constellation indices (ties -> lowest index)."""
    H = freq_response(h_D_hat, layout.N)[layout.data_indices]
    if np.any(np.abs(H) < 1e-12):
        warnings.warn("estimated SoI channel vanishes on some data carriers", ZeroChannelWarning,
                      stacklevel=2)
    dist = np.abs(np.asarray(r)[:, None] - H[:, None] * constellation.points[None, :]) ** 2
    return np.argmin(dist, axis=1)


def pilot_only_h_D(y, h_I_hat, x_I, j_I_hat, params: SystemParams, layout: PilotLayout,
                   pilots=None) -> np.ndarray:
    """LS estimate of ``h_D`` from the pilot carriers after SI cancellation."""
    if pilots is None:
        pilots = pilot_values(params, layout.M)
    p = layout.pilot_indices
    O = si_design(h_I_hat, x_I, len(j_I_hat))
    A = pilots[:, None] * freq_matrix(params.N, params.L_S)[p]
    return lstsq(A, (y - O @ j_I_hat)[p])


def initial_state(y, h_I_hat, x_I, params: SystemParams, layout: PilotLayout,
                  pilots=None) -> ReceiverState:
    j = unit_vector(params.K)
    h_D = pilot_only_h_D(y, h_I_hat, x_I, j, params, layout, pilots)
    return ReceiverState(h_I_hat=np.asarray(h_I_hat), j_I_hat=j, h_D_hat=h_D)


def stage2_iterate(y, state: ReceiverState, x_I, params: SystemParams, layout: PilotLayout,
                   constellation: Constellation, pilots=None) -> ReceiverState:
    """One detect-then-estimate pass; returns the state holding the new detections."""
    if pilots is None:
        pilots = pilot_values(params, layout.M)
    O = si_design(state.h_I_hat, x_I, params.K)
    F_S = freq_matrix(params.N, params.L_S)
    r = (y - O @ state.j_I_hat)[layout.data_indices]
    idx = detect_ml(r, state.h_D_hat, layout, constellation)
    x_hat = layout.assemble(pilots, constellation.points[idx])
    P = x_hat[:, None] * F_S
    j = lstsq(O, y - P @ state.h_D_hat)
    h_D = lstsq(P, y - O @ j)
    return replace(state, j_I_hat=j, h_D_hat=h_D, x_d_idx=idx)


@dataclass
class IterationRecord:
    j_I_hat: np.ndarray
    h_D_hat: np.ndarray
    x_d_idx: np.ndarray
    symbol_errors: int = -1
    bit_errors: int = -1
    d_n: float = float("nan")
    mse_j: float = float("nan")
    mse_hD: float = float("nan")
    residual_power: float = float("nan")


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def run_receiver(y, x_I, params: SystemParams, layout: PilotLayout,
                 constellation: Constellation, n_iters: int, h_I_hat,
                 truth: Optional[LinkRealization] = None, pilots=None) -> IterationTrace:
    """Run ``n_iters`` stage-2 iterations from the pilot-only initial state.

    Record ``n`` holds the detections of iteration ``n`` and the estimates
    computed from them.  Error fields are filled only when ``truth`` is given.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if pilots is None:
        pilots = pilot_values(params, layout.M)
    state = initial_state(y, h_I_hat, x_I, params, layout, pilots)
    trace = IterationTrace()
    if truth is not None:
        F_S = freq_matrix(params.N, params.L_S)
        j_true = truth.j_prime(params.K)
        x_d = constellation.points[truth.data_symbols]
        s = (F_S @ truth.h_D)[layout.data_indices] * x_d
    for _ in range(n_iters):
        state = stage2_iterate(y, state, x_I, params, layout, constellation, pilots)
        rec = IterationRecord(j_I_hat=state.j_I_hat, h_D_hat=state.h_D_hat,
                              x_d_idx=state.x_d_idx)
        if truth is not None:
            sent = truth.data_symbols
            rec.symbol_errors = int(np.count_nonzero(sent != state.x_d_idx))
            rec.bit_errors = constellation.bit_errors(sent, state.x_d_idx)
            rec.d_n = float(np.sum(np.abs(x_d - constellation.points[state.x_d_idx]) ** 2))
            rec.mse_j = float(np.sum(np.abs(j_true - state.j_I_hat) ** 2))
            rec.mse_hD = float(np.sum(np.abs(truth.h_D - state.h_D_hat) ** 2))
            r = cancel_si(y, state.h_I_hat, x_I, state.j_I_hat, layout)
            rec.residual_power = float(np.sum(np.abs(r - s) ** 2))
        trace.records.append(rec)
    return trace
