"""
Watermark round trip
====================

Generate a watermarked circuit, look at it, and check that the key finds
the watermark again while an unrelated key does not.

Run with ``python notebooks/01_round_trip.py``.
"""

# %%
# A key holds the secret message plus the material for the stream cipher and
# the Gaussian sampler.  A seed makes it reproducible; leave it out for OS
# randomness.
import numpy as np

from qtag import DiffusionSchedule, SrmConfig, WatermarkKey, detect_watermark, embed, emit_qasm, make_backend
from qtag.watermark import DetectionPolicy, bits_to_str

key = WatermarkKey.generate(24, seed=2024)
print("message:", bits_to_str(key.message))

# %%
# The linear backend stands in for a trained denoiser: a fixed orthogonal
# mixing of the latent at every DDIM step.  It is enough to make inversion
# non-trivial while staying fully deterministic.
backend = make_backend("linear:0")
schedule = DiffusionSchedule(50)
gen = embed(key, backend, schedule)
print(f"{gen.circuit.num_qubits} qubits, {gen.circuit.num_columns} columns, {gen.circuit.gate_count()} gates")
print("\n".join(emit_qasm(gen.circuit).splitlines()[:12]), "\n...")

# %%
# Detection inverts the circuit's latent back to the starting noise, reads the
# sign pattern and votes the message out of the repetition code.
policy = DetectionPolicy.for_capacity(24)
report = detect_watermark(gen.circuit, key, policy, backend, schedule)
print("owner key:", report.detected, f"similarity {report.best_similarity:.3f}")

# %%
# A different key sees coin flips: about half of the bits agree.
other = WatermarkKey.generate(24, seed=7)
report = detect_watermark(gen.circuit, other, policy, backend, schedule, SrmConfig(enabled=False))
print("other key:", report.detected, f"similarity {report.best_similarity:.3f}")

# %%
# How close is the inverted noise to the one we started from?
from qtag import ddim_invert, reverse_sample

back = ddim_invert(gen.z_0, backend, schedule, refine=1)
print("sign agreement:", np.mean(reverse_sample(back) == reverse_sample(gen.z_T)))
