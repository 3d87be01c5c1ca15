"""Python bindings for the softbci alpha-wave pipeline and soft-robot simulator."""

import json as _json

from ._core import (  # noqa: F401
    EEG_RATE_HZ,
    WINDOW_HOP,
    WINDOW_LENGTH,
    CalibrationError,
    ConfigError,
    ContractViolation,
    Error,
    FrameDecoder,
    IoError,
    SignalIntegrityError,
    SimulationFault,
    bandpass,
    calibrate,
    compute_psd,
    config_keys,
    detect_alpha,
    encode_frame,
    export_figures,
    filter_gain,
    normalize,
    settle,
    synthesize,
    to_duty,
    to_flower_command,
)
from . import _core


def _settings(settings, overrides):
    merged = {k: str(v) for k, v in (settings or {}).items()}
    for k, v in overrides.items():
        if isinstance(v, bool):
            v = "true" if v else "false"
        merged[k] = str(v)
    return merged


def run(settings=None, **overrides):
    """Run the pipeline end to end and return the report as a dict.

    Keys are the config-file keys, e.g. run(embodiment="flower", seed=3, out="out").
    """
    return _json.loads(_core.run_json(_settings(settings, overrides)))


def calibrate_source(settings=None, **overrides):
    """Calibrate from the configured source; returns (p_ref, threshold)."""
    return _core.calibrate_json(_settings(settings, overrides))


__all__ = [n for n in dir() if not n.startswith("_")]
