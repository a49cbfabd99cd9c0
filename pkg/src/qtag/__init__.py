"""Keyed, structure-robust watermarks for diffusion-generated quantum circuits."""
from .attacks import AttackSpec, apply_attack
from .circuit import (
    Circuit,
    Gate,
    emit_qasm,
    equivalent_up_to_phase,
    load_circuit,
    parse_qasm,
    save_circuit,
    simulate_unitary,
)
from .codec import DEFAULT_SHAPE, decode_latent, encode_circuit
from .diffusion import DiffusionSchedule, LinearOrthogonal, ZeroNoise, ddim_invert, ddim_sample, make_backend
from .errors import QTagError
from .harness import ExperimentConfig, ResultRow, run_calibration, run_robustness_bench
from .pipeline import embed, generate_plain
from .srm import DetectionReport, SrmConfig, detect_watermark
from .watermark import (
    DetectionPolicy,
    WatermarkKey,
    ecc_decode,
    ecc_encode,
    fpr_binomial,
    np_calibrate,
    reverse_sample,
    ssm_sample,
)

__version__ = "0.1.0"

__all__ = [
    "apply_attack",
    "AttackSpec",
    "Circuit",
    "ddim_invert",
    "ddim_sample",
    "decode_latent",
    "DEFAULT_SHAPE",
    "detect_watermark",
    "DetectionPolicy",
    "DetectionReport",
    "DiffusionSchedule",
    "ecc_decode",
    "ecc_encode",
    "embed",
    "emit_qasm",
    "encode_circuit",
    "equivalent_up_to_phase",
    "ExperimentConfig",
    "fpr_binomial",
    "Gate",
    "generate_plain",
    "LinearOrthogonal",
    "load_circuit",
    "make_backend",
    "np_calibrate",
    "parse_qasm",
    "QTagError",
    "ResultRow",
    "reverse_sample",
    "run_calibration",
    "run_robustness_bench",
    "save_circuit",
    "simulate_unitary",
    "SrmConfig",
    "ssm_sample",
    "WatermarkKey",
    "ZeroNoise",
]
