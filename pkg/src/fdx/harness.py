"""Monte Carlo sweeps of the two-stage receiver with analytic bound overlays.

Every trial draws its randomness from ``SeedSequence([seed, trial])``, so a
trial's outcome depends only on the master seed and its index.  The same
trial index therefore sees the same channel/noise draws at every grid
point (common random numbers), and results are aggregated by trial index,
which makes serial and parallel runs byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .air import synthesize
from .bounds import BoundsInput, bounds_report
from .core import InvalidParams, SystemParams, comb_layout, make_constellation, validate_params
from .phase_noise import OscillatorMode, PhaseNoiseSpec
from .receiver import run_receiver, stage1_estimate

CSV_HEADER = "snr_db,inr_db,delta_f,iteration,ber,ber_ci95,mse_j,mse_hd,ber_lb,gamma0_db"


class ConfigError(ValueError):
    pass


class EmptyResult(ValueError):
    pass


class SweepError(RuntimeError):
    pass


def _as_list(v) -> list:
    if isinstance(v, (list, tuple, np.ndarray)):
        return [float(x) for x in v]
    return [float(v)]


@dataclass
class ExperimentConfig:
    """Sweep definition.  ``params`` fixes the dimensions; powers follow the grids.

    Link powers are set per grid point with ``E_S = N`` (unit power per
    carrier), ``sigma_w2 = E_hS E_S / SNR`` and ``E_I = INR sigma_w2 / E_hI``.
    """

    params: SystemParams
    delta_f: List[float] = field(default_factory=lambda: [1e-4])
    snr_db_grid: List[float] = field(default_factory=lambda: [15.0])
    inr_db_grid: List[float] = field(default_factory=lambda: [40.0])
    n_iters: int = 6
    n_trials: int = 2000
    seed: int = 0
    oracle_si_csi: bool = False
    oscillator_mode: str = "separate"
    alpha_I: int = 0
    constellation: str = "BPSK"
    stage1_iters: int = 4
    output_path: Optional[str] = None

    def __post_init__(self):
        self.delta_f = _as_list(self.delta_f)
        self.snr_db_grid = _as_list(self.snr_db_grid)
        self.inr_db_grid = _as_list(self.inr_db_grid)

    def validate(self) -> "ExperimentConfig":
        errs = []
        if int(self.n_trials) < 1:
            errs.append("n_trials must be >= 1")
        if int(self.n_iters) < 1:
            errs.append("n_iters must be >= 1")
        if int(self.stage1_iters) < 1:
            errs.append("stage1_iters must be >= 1")
        for name in ("delta_f", "snr_db_grid", "inr_db_grid"):
            v = getattr(self, name)
            if not v:
                errs.append(f"{name} must be non-empty")
            elif not all(math.isfinite(x) for x in v):
                errs.append(f"{name} must be finite")
        if any(x < 0 for x in self.delta_f):
            errs.append("delta_f must be >= 0")
        if self.oscillator_mode not in ("separate", "common"):
            errs.append(f"unknown oscillator_mode {self.oscillator_mode!r}")
        if int(self.alpha_I) < 0:
            errs.append("alpha_I must be >= 0")
        if self.constellation.upper() not in ("BPSK", "QPSK"):
            errs.append(f"unknown constellation {self.constellation!r}")
        if int(self.seed) < 0:
            errs.append("seed must be >= 0")
        try:
            self.params = validate_params(self.params)
        except InvalidParams as e:
            errs.extend(e.reasons)
        if errs:
            raise ConfigError("; ".join(errs))
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {k: getattr(self.params, k) for k in ("N", "M", "L_I", "L_S", "E_hI", "E_hS")}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "params" not in d:
            raise ConfigError("config needs 'params' with N, M, L_I, L_S")
        p = d["params"]
        try:
            d["params"] = SystemParams(N=int(p["N"]), M=int(p["M"]), L_I=int(p["L_I"]),
                                       L_S=int(p["L_S"]), E_hI=float(p.get("E_hI", 1.0)),
                                       E_hS=float(p.get("E_hS", 1.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad params block: {e!r}") from e
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(raw)


PROFILES = {
    "desk": dict(params=SystemParams(N=256, M=16, L_I=8, L_S=8), n_trials=2000),
    "full": dict(params=SystemParams(N=1024, M=40, L_I=20, L_S=20), n_trials=2000),
}


def profile_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}")
    kw = dict(PROFILES[name])
    kw.update(overrides)
    return ExperimentConfig(**kw)


@dataclass(frozen=True)
class GridPoint:
    snr_db: float
    inr_db: float
    delta_f: float


@dataclass
class SweepRow:
    snr_db: float
    inr_db: float
    delta_f: float
    iteration: int
    ber: float
    ber_ci95: float
    mse_j: float
    mse_hD: float
    ber_lower_bound: float
    sinr_bound_gamma0: float
    # not part of the CSV schema
    mse_j_se: float = float("nan")
    mean_d: float = float("nan")
    C_lb: float = float("nan")
    D_lb: float = float("nan")
    n_bits: int = 0

    @property
    def gamma0_db(self) -> float:
        return 10.0 * math.log10(self.sinr_bound_gamma0)

    def csv_line(self) -> str:
        vals = [self.snr_db, self.inr_db, self.delta_f, self.iteration, self.ber, self.ber_ci95,
                self.mse_j, self.mse_hD, self.ber_lower_bound, self.gamma0_db]
        return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals)


@dataclass
class SweepResult:
    rows: List[SweepRow]
    n_trials: int
    wall_clock: float = 0.0
    notes: dict = field(default_factory=dict)

    def select(self, **kw) -> List[SweepRow]:
        out = self.rows
        for k, v in kw.items():
            out = [r for r in out if getattr(r, k) == v]
        return out

    def to_csv(self) -> str:
        if not self.rows:
            raise EmptyResult("sweep result has no rows")
        return "\n".join([CSV_HEADER] + [r.csv_line() for r in self.rows]) + "\n"


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _point_setup(cfg: ExperimentConfig, gp: GridPoint):
    base = cfg.params
    params = SystemParams.from_db(base.N, base.M, base.L_I, base.L_S, gp.snr_db, gp.inr_db,
                                  E_hS=base.E_hS, E_hI=base.E_hI)
    pn = PhaseNoiseSpec.from_delta_f(gp.delta_f, base.N, OscillatorMode(cfg.oscillator_mode),
                                     cfg.alpha_I)
    layout = comb_layout(base.N, base.M)
    const = make_constellation(cfg.constellation, params.E_S, params.N)
    return params, pn, layout, const


def run_trial(cfg: ExperimentConfig, gp: GridPoint, trial: int, setup=None) -> np.ndarray:
    """Per-iteration ``[bit_errors, d_n, mse_j, mse_hD]`` for one trial, shape (n_iters, 4)."""
    params, pn, layout, const = setup or _point_setup(cfg, gp)
    rng = trial_rng(cfg.seed, trial)
    s1, s2 = rng.spawn(2)
    pilot_link = synthesize(params, layout, const, pn, s1, all_pilots=True)
    link = synthesize(params, layout, const, pn, s2, h_I=pilot_link.h_I)
    if cfg.oracle_si_csi:
        h_I_hat = link.h_I
    else:
        h_I_hat = stage1_estimate(pilot_link.y, pilot_link.x_I, pilot_link.x_S, params,
                                  cfg.stage1_iters).h_I_hat
    tr = run_receiver(link.y, link.x_I, params, layout, const, cfg.n_iters, h_I_hat, truth=link)
    return np.column_stack([tr.column("bit_errors"), tr.column("d_n"), tr.column("mse_j"),
                            tr.column("mse_hD")]).astype(float)


def _run_chunk(cfg: ExperimentConfig, gp: GridPoint, trials: Sequence[int]) -> np.ndarray:
    setup = _point_setup(cfg, gp)
    out = np.empty((len(trials), cfg.n_iters, 4))
    for i, t in enumerate(trials):
        try:
            out[i] = run_trial(cfg, gp, t, setup)
        except Exception as e:  # noqa: BLE001 - re-raised with context
            raise SweepError(f"trial {t} (seed [{cfg.seed}, {t}]) failed at {gp}: {e!r}") from e
    return out


def worker_count() -> int:
    raw = os.environ.get("FDX_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"FDX_THREADS must be an integer, got {raw!r}") from e
    if n < 0:
        raise ConfigError("FDX_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def simulate_point(cfg: ExperimentConfig, gp: GridPoint, workers: Optional[int] = None) -> np.ndarray:
    """Stacked per-trial results, shape (n_trials, n_iters, 4), in trial order."""
    workers = worker_count() if workers is None else max(1, int(workers))
    trials = np.arange(cfg.n_trials)
    if workers == 1 or cfg.n_trials < 2:
        return _run_chunk(cfg, gp, trials)
    chunks = [c for c in np.array_split(trials, min(workers * 4, cfg.n_trials)) if c.size]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_chunk, [cfg] * len(chunks), [gp] * len(chunks), chunks))
    return np.concatenate(parts, axis=0)


def _rows_for_point(cfg: ExperimentConfig, gp: GridPoint, res: np.ndarray) -> List[SweepRow]:
    params, pn, layout, const = _point_setup(cfg, gp)
    rep = bounds_report(BoundsInput.from_phase_noise(params, pn, const))
    ber_lb = rep.ber_lb_bpsk if const.T == 2 else rep.ber_lb_general
    n = res.shape[0]
    n_bits = n * layout.Q * const.bits_per_symbol
    rows = []
    for it in range(cfg.n_iters):
        errs = float(np.sum(res[:, it, 0]))
        ber = errs / n_bits
        mse = res[:, it, 2]
        mean_d = float(np.mean(res[:, it, 1]))
        rows.append(SweepRow(
            snr_db=gp.snr_db, inr_db=gp.inr_db, delta_f=gp.delta_f, iteration=it + 1,
            ber=ber, ber_ci95=1.96 * math.sqrt(ber * (1.0 - ber) / n_bits),
            mse_j=float(np.mean(mse)), mse_hD=float(np.mean(res[:, it, 3])),
            ber_lower_bound=ber_lb, sinr_bound_gamma0=rep.gamma0,
            mse_j_se=float(np.std(mse, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
            mean_d=mean_d, C_lb=float(rep.C_lb(mean_d)), D_lb=float(rep.D_lb(mean_d)),
            n_bits=n_bits))
    return rows


def grid_points(cfg: ExperimentConfig) -> List[GridPoint]:
    return [GridPoint(s, i, f) for f in cfg.delta_f for i in cfg.inr_db_grid for s in cfg.snr_db_grid]


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    cfg.validate()
    t0 = time.perf_counter()
    rows: List[SweepRow] = []
    for gp in grid_points(cfg):
        rows.extend(_rows_for_point(cfg, gp, simulate_point(cfg, gp, workers)))
    return SweepResult(rows=rows, n_trials=cfg.n_trials, wall_clock=time.perf_counter() - t0)


def mse_vs_snr_report(cfg: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    """Sweep plus a summary of how the final-iteration phase-noise MSE moves with SNR.

    ``notes["trend"]`` maps ``(inr_db, delta_f)`` to the lowest- and
    highest-SNR MSEs and whether the latter is larger.  ``notes["below_bound"]``
    counts rows whose MSE falls under ``C_lb`` at the realized mean ``d``.
    """
    res = run_sweep(cfg, workers)
    trend = {}
    last = [r for r in res.rows if r.iteration == cfg.n_iters]
    for inr in cfg.inr_db_grid:
        for df in cfg.delta_f:
            pts = sorted((r for r in last if r.inr_db == inr and r.delta_f == df),
                         key=lambda r: r.snr_db)
            lo, hi = pts[0], pts[-1]
            trend[(inr, df)] = {"snr_lo": lo.snr_db, "mse_lo": lo.mse_j, "snr_hi": hi.snr_db,
                                "mse_hi": hi.mse_j, "increasing": hi.mse_j > lo.mse_j}
    res.notes["trend"] = trend
    res.notes["below_bound"] = sum(r.mse_j < r.C_lb for r in res.rows)
    return res


def emit_csv(result: SweepResult, path) -> None:
    text = result.to_csv()
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(e.errno, f"cannot write CSV to {path}: {e.strerror}") from e


def bounds_table(cfg: ExperimentConfig):
    """Bound reports for every grid point, without any simulation."""
    cfg.validate()
    out = []
    for gp in grid_points(cfg):
        params, pn, _, const = _point_setup(cfg, gp)
        out.append((gp, bounds_report(BoundsInput.from_phase_noise(params, pn, const))))
    return out
