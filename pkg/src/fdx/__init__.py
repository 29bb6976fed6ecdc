"""Joint SI cancellation and data detection for full-duplex OFDM with phase noise."""

from .core import (Constellation, InvalidParams, PilotLayout, SystemParams, UnknownConstellation,
                   comb_layout, make_constellation, validate_params)
from .phase_noise import OscillatorMode, PhaseNoiseSpec, lambda_I, lambda_S
from .air import LinkRealization, synthesize
from .receiver import ReceiverState, IterationTrace, run_receiver, stage1_estimate
from .bounds import BoundsInput, BoundsReport, bounds_report
from .harness import ExperimentConfig, SweepResult, emit_csv, run_sweep

__version__ = "0.1.0"
