"""Monte-Carlo experiment runner producing CSV result tables.

Every random choice is seeded from ``derive_seed(master_seed, ...)`` so a run
is reproducible from its config alone; trial order never depends on
completion order.  Results come from the reference diffusion backends, not a
trained circuit generator, and the CSV header says so.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .attacks import SWEEP_RANGES, AttackSpec, apply_attack
from .circuit import Circuit
from .codec import DEFAULT_SHAPE, encode_circuit, informative_positions
from .diffusion import DEFAULT_GUIDANCE, DiffusionSchedule, ddim_invert, make_backend
from .errors import ConfigInvalid, IndivisibleCapacity
from .pipeline import embed_batch, generate_plain_batch
from .srm import DEFAULT_INVERSION_REFINE, DetectionReport, SrmConfig, detect_watermark
from .watermark import (
    CAPACITIES,
    DEFAULT_ALPHA0,
    DEFAULT_TAU,
    CalibrationResult,
    DetectionPolicy,
    WatermarkKey,
    derive_seed,
    ecc_decode,
    fpr_binomial,
    np_calibrate,
    repetition_factor,
    reverse_sample,
)

_BATCH = 256
# "fixed": one owner key for every trial (under ZeroNoise every trial then decodes to
# the same circuit); "per_trial": an independent key per trial
KEY_MODES = ("per_trial", "fixed")


@dataclass
class ExperimentConfig:
    trials: int = 1000
    backend: str = "zero"
    steps: int = 50
    guidance: float = DEFAULT_GUIDANCE
    capacity: int = 24
    attacks: list[AttackSpec] = field(default_factory=list)
    tau: float | None = None
    alpha0: float = DEFAULT_ALPHA0
    srm: SrmConfig = field(default_factory=SrmConfig)
    inversion_refine: int = DEFAULT_INVERSION_REFINE
    erasures: bool = True
    master_seed: int = 0
    output: str | None = None
    shape: tuple[int, int, int] = DEFAULT_SHAPE
    key_mode: str = "per_trial"
    n_jobs: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise ConfigInvalid(f"trials must be >= 1, got {self.trials}")
        if self.inversion_refine < 0 or self.n_jobs < 1:
            raise ConfigInvalid("inversion_refine must be >= 0 and n_jobs >= 1")
        if self.key_mode not in KEY_MODES:
            raise ConfigInvalid(f"key_mode must be one of {KEY_MODES}, got {self.key_mode!r}")
        repetition_factor(self.capacity, self.n)
        return self

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    def policy(self, capacity: int | None = None) -> DetectionPolicy:
        k = capacity or self.capacity
        if self.tau is not None and capacity in (None, self.capacity):
            return DetectionPolicy(k=k, n=self.n, tau=self.tau, alpha0=self.alpha0)
        if k == 24 and self.alpha0 == DEFAULT_ALPHA0:
            return DetectionPolicy(k=k, n=self.n, tau=DEFAULT_TAU, alpha0=self.alpha0)
        return DetectionPolicy.for_capacity(k, self.n, self.alpha0)

    def owner_key(self, capacity: int | None = None) -> WatermarkKey:
        return WatermarkKey.generate(capacity or self.capacity, seed=derive_seed(self.master_seed, "owner"))

    def trial_keys(self, count: int, tag: str, capacity: int | None = None) -> list[WatermarkKey]:
        """One key per trial: fresh keys (``per_trial``) or the owner key with per-trial Gaussian seeds."""
        k = capacity or self.capacity
        if self.key_mode == "fixed":
            owner = self.owner_key(k)
            return [owner.with_gauss_seed(derive_seed(self.master_seed, tag, "gauss", i)) for i in range(count)]
        return [WatermarkKey.generate(k, seed=derive_seed(self.master_seed, tag, "key", i)) for i in range(count)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = list(self.shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        if "attacks" in d:
            d["attacks"] = [a if isinstance(a, AttackSpec) else AttackSpec.from_dict(a) for a in d["attacks"]]
        if "srm" in d and isinstance(d["srm"], dict):
            d["srm"] = SrmConfig(**d["srm"])
        if "shape" in d:
            d["shape"] = tuple(d["shape"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultRow:
    experiment: str
    attack_kind: str
    attack_count: int
    gate_count: float
    capacity: int
    steps: int
    trials: int
    detections: int
    tpr: float
    mean_bit_accuracy: float
    mean_candidates: float
    wall_time: float = 0.0


CSV_COLUMNS = [f.name for f in fields(ResultRow) if f.name != "wall_time"]


def rows_to_csv(rows: list[ResultRow], cfg: ExperimentConfig, include_timing: bool = False) -> str:
    """CSV text with a provenance comment line; timing is opt-in so reruns stay byte-identical."""
    cols = CSV_COLUMNS + (["wall_time"] if include_timing else [])
    buf = io.StringIO()
    buf.write(f"# reference backend '{cfg.backend}' (not a trained generator); "
              f"T={cfg.steps} guidance={cfg.guidance} key_mode={cfg.key_mode} "
              f"srm={cfg.srm.directions if cfg.srm.enabled else 'off'} master_seed={cfg.master_seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def _fmt(v):
    # shortest round-trip repr, so tpr in the file parses back to exactly detections/trials
    return repr(float(v)) if isinstance(v, float) else v


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _write(rows, cfg, path=None):
    path = path or cfg.output
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(rows_to_csv(rows, cfg))


# ------------------------------------------------------------------ generation

def watermarked_circuits(cfg: ExperimentConfig, keys: list[WatermarkKey], schedule=None) -> list[Circuit]:
    """One watermarked circuit per key, generated in batches."""
    backend = make_backend(cfg.backend, cfg.shape)
    schedule = schedule or DiffusionSchedule(cfg.steps)
    out: list[Circuit] = []
    for lo in range(0, len(keys), _BATCH):
        out += embed_batch(keys[lo:lo + _BATCH], backend, schedule, cfg.shape, cfg.guidance)
    return out


def plain_circuits(cfg: ExperimentConfig, count: int, schedule=None, tag="plain") -> list[Circuit]:
    """Unwatermarked circuits; circuit ``i`` starts from ``derive_seed(master, tag, i)``."""
    backend = make_backend(cfg.backend, cfg.shape)
    schedule = schedule or DiffusionSchedule(cfg.steps)
    out: list[Circuit] = []
    for lo in range(0, count, _BATCH):
        seeds = [derive_seed(cfg.master_seed, tag, i) for i in range(lo, min(count, lo + _BATCH))]
        out += generate_plain_batch(seeds, backend, schedule, cfg.shape, cfg.guidance)
    return out


def _map(cfg: ExperimentConfig, fn, items):
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _trial_attack(spec: AttackSpec | None, cfg: ExperimentConfig, i: int) -> AttackSpec | None:
    if spec is None or spec.count == 0:
        return None
    seed = derive_seed(cfg.master_seed, "attack", spec.kind, spec.count, spec.mode, spec.seed, i)
    return replace(spec, seed=seed)


def evaluate_cell(experiment: str, circuits: list[Circuit], keys: list[WatermarkKey], policy: DetectionPolicy,
                  cfg: ExperimentConfig, spec: AttackSpec | None = None, srm: SrmConfig | None = None,
                  schedule: DiffusionSchedule | None = None) -> ResultRow:
    """Attack each circuit (if ``spec``), detect with the matching key and aggregate one row."""
    backend = make_backend(cfg.backend, cfg.shape)
    schedule = schedule or DiffusionSchedule(cfg.steps)
    srm = srm or cfg.srm
    t0 = time.perf_counter()

    def one(i: int) -> tuple[DetectionReport, int]:
        a = _trial_attack(spec, cfg, i)
        attacked = apply_attack(circuits[i], a) if a else circuits[i]
        rep = detect_watermark(attacked, keys[i], policy, backend, schedule, srm, cfg.shape, cfg.guidance,
                               cfg.inversion_refine, cfg.erasures)
        return rep, attacked.gate_count()

    results = _map(cfg, one, range(len(circuits)))
    reports = [r for r, _ in results]
    detections = sum(r.detected for r in reports)
    return ResultRow(
        experiment=experiment,
        attack_kind=spec.kind if spec else "none",
        attack_count=spec.count if spec else 0,
        gate_count=float(np.mean([g for _, g in results])),
        capacity=policy.k,
        steps=schedule.T,
        trials=len(circuits),
        detections=int(detections),
        tpr=detections / len(circuits),
        mean_bit_accuracy=float(np.mean([r.best_similarity for r in reports])),
        mean_candidates=float(np.mean([r.candidates_tried for r in reports])),
        wall_time=time.perf_counter() - t0,
    )


def default_attack_grid() -> list[AttackSpec]:
    """Replacement 1-5, strict append 1-5, insertion 1-2 pairs, deletion 1-3."""
    grid = []
    for kind in ("replace", "append", "insert", "delete"):
        lo, hi = SWEEP_RANGES[kind]
        grid += [AttackSpec(kind, c) for c in range(lo, hi + 1)]
    return grid


# ----------------------------------------------------------------- experiments

def run_robustness_bench(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per attack in ``cfg.attacks``; if empty, a clean row plus the default grid."""
    cfg.validate()
    policy = cfg.policy()
    keys = cfg.trial_keys(cfg.trials, "wm")
    circuits = watermarked_circuits(cfg, keys)
    cells = cfg.attacks or [None] + default_attack_grid()
    rows = [evaluate_cell("robustness", circuits, keys, policy, cfg, spec) for spec in cells]
    _write(rows, cfg)
    return rows


def run_capacity_sweep(cfg: ExperimentConfig, capacities=CAPACITIES,
                       replace_counts=range(1, 6)) -> list[ResultRow]:
    """Clean and replacement rows for each message length, each at its minimal threshold."""
    cfg.validate()
    for k in capacities:
        if cfg.n % k:
            raise IndivisibleCapacity(f"capacity {k} does not divide n={cfg.n}")
    rows = []
    for k in capacities:
        policy = DetectionPolicy.for_capacity(k, cfg.n, cfg.alpha0)
        keys = cfg.trial_keys(cfg.trials, f"wm-k{k}", k)
        circuits = watermarked_circuits(cfg, keys)
        rows.append(evaluate_cell("capacity", circuits, keys, policy, cfg))
        for c in replace_counts:
            rows.append(evaluate_cell("capacity", circuits, keys, policy, cfg, AttackSpec("replace", c)))
    _write(rows, cfg)
    return rows


def run_steps_sweep(cfg: ExperimentConfig, steps=(10, 25, 50, 100)) -> list[ResultRow]:
    """Clean (plus ``cfg.attacks``) rows with sampling and inversion at each step count."""
    cfg.validate()
    policy = cfg.policy()
    keys = cfg.trial_keys(cfg.trials, "wm")
    rows = []
    for T in steps:
        sched = DiffusionSchedule(T)
        circuits = watermarked_circuits(cfg, keys, sched)
        rows.append(evaluate_cell("steps", circuits, keys, policy, cfg, schedule=sched))
        for spec in cfg.attacks:
            rows.append(evaluate_cell("steps", circuits, keys, policy, cfg, spec, schedule=sched))
    _write(rows, cfg)
    return rows


def run_srm_ablation(cfg: ExperimentConfig, widths=(1, 2, 3)) -> list[ResultRow]:
    """Column-cut attacks detected with and without resynchronization."""
    cfg.validate()
    policy = cfg.policy()
    keys = cfg.trial_keys(cfg.trials, "wm")
    circuits = watermarked_circuits(cfg, keys)
    rows = []
    for w in widths:
        spec = AttackSpec("drop_columns", w)
        rows.append(evaluate_cell("srm_off", circuits, keys, policy, cfg, spec, srm=replace(cfg.srm, enabled=False)))
        rows.append(evaluate_cell("srm_on", circuits, keys, policy, cfg, spec, srm=replace(cfg.srm, enabled=True)))
    _write(rows, cfg)
    return rows


def run_false_accept(cfg: ExperimentConfig) -> ResultRow:
    """Detection rate on ``cfg.trials`` unwatermarked circuits, each checked against its trial key."""
    cfg.validate()
    backend = make_backend(cfg.backend, cfg.shape)
    schedule = DiffusionSchedule(cfg.steps)
    policy = cfg.policy()
    keys = cfg.trial_keys(cfg.trials, "h0")
    circuits = plain_circuits(cfg, cfg.trials)
    t0 = time.perf_counter()

    def one(i):
        return detect_watermark(circuits[i], keys[i], policy, backend, schedule, cfg.srm, cfg.shape,
                                cfg.guidance, cfg.inversion_refine, cfg.erasures)

    reports = _map(cfg, one, range(len(circuits)))
    det = sum(r.detected for r in reports)
    row = ResultRow(
        experiment="false_accept",
        attack_kind="none", attack_count=0,
        gate_count=float(np.mean([c.gate_count() for c in circuits])),
        capacity=cfg.capacity, steps=cfg.steps, trials=len(circuits), detections=int(det),
        tpr=det / len(circuits),
        mean_bit_accuracy=float(np.mean([r.best_similarity for r in reports])),
        mean_candidates=float(np.mean([r.candidates_tried for r in reports])),
        wall_time=time.perf_counter() - t0,
    )
    _write([row], cfg)
    return row


def union_bound(cfg: ExperimentConfig) -> float:
    """Candidate count times the per-candidate tail ``fpr_binomial(tau_bits, k)``."""
    policy = cfg.policy()
    cands = cfg.srm.candidate_count(cfg.shape[-1]) if cfg.srm.enabled else 1
    return cands * fpr_binomial(policy.tau_bits, policy.k)


# ----------------------------------------------------------------- calibration

@dataclass
class CalibrationReport:
    result: CalibrationResult
    tau_bits: int
    fpr_strict: float        # P(X > tau_bits), the binomial tail sum
    fpr_accept: float        # P(X >= tau_bits), what the >= accept rule admits
    histogram: list[dict]

    def to_dict(self) -> dict:
        return {**asdict(self.result), "tau_bits": self.tau_bits,
                "fpr_strict": self.fpr_strict, "fpr_accept": self.fpr_accept}

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["correct_bits", "watermarked", "unwatermarked"], lineterminator="\n")
        w.writeheader()
        w.writerows(self.histogram)
        return buf.getvalue()


def correct_bit_counts(circuits: list[Circuit], keys: list[WatermarkKey], cfg: ExperimentConfig,
                       schedule: DiffusionSchedule | None = None) -> np.ndarray:
    """Matching message bits under standard extraction, circuit ``i`` checked against ``keys[i]``."""
    backend = make_backend(cfg.backend, cfg.shape)
    schedule = schedule or DiffusionSchedule(cfg.steps)
    out = np.empty(len(circuits), dtype=np.int64)
    for lo in range(0, len(circuits), _BATCH):
        chunk = circuits[lo:lo + _BATCH]
        z = np.stack([encode_circuit(c, cfg.shape).latent for c in chunk])
        bits = reverse_sample(ddim_invert(z, backend, schedule, cfg.guidance, refine=cfg.inversion_refine))
        valid = informative_positions(z) if cfg.erasures else [None] * len(chunk)
        for j, key in enumerate(keys[lo:lo + len(chunk)]):
            m = ecc_decode(bits[j], key, key.k, valid[j])
            out[lo + j] = int((m == key.message).sum())
    return out


def _fit(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def run_calibration(samples_w: int, samples_u: int, alpha0: float, cfg: ExperimentConfig,
                    mu0: float | None = None, sigma0: float | None = None,
                    histogram_path=None) -> CalibrationReport:
    """Fit Gaussians to correct-bit counts of watermarked and plain circuits; set the NP threshold.

    Passing both ``mu0`` and ``sigma0`` skips the H0 fit.  Keys follow
    ``cfg.key_mode`` for both populations.
    """
    cfg.validate()
    bypass = mu0 is not None and sigma0 is not None
    if samples_w < 100 or (not bypass and samples_u < 100):
        raise ConfigInvalid("calibration needs at least 100 samples per population")
    keys_w = cfg.trial_keys(samples_w, "calib-wm")
    counts_w = correct_bit_counts(watermarked_circuits(cfg, keys_w), keys_w, cfg)
    mu1, sigma1 = _fit(counts_w)

    counts_u = np.empty(0, dtype=np.int64)
    if not bypass:
        keys_u = cfg.trial_keys(samples_u, "calib-h0")
        counts_u = correct_bit_counts(plain_circuits(cfg, samples_u, tag="calib-plain"), keys_u, cfg)
        mu0, sigma0 = _fit(counts_u)
        if sigma0 <= 0:
            raise ConfigInvalid("unwatermarked counts have zero spread; cannot fit H0")

    result = np_calibrate(mu0, sigma0, alpha0, mu1=mu1, sigma1=sigma1)
    k = cfg.capacity
    tau_bits = cfg.policy().tau_bits
    hist = [{"correct_bits": b,
             "watermarked": int((counts_w == b).sum()),
             "unwatermarked": int((counts_u == b).sum())} for b in range(k + 1)]
    report = CalibrationReport(result, tau_bits, fpr_binomial(tau_bits, k),
                               fpr_binomial(tau_bits - 1, k) if tau_bits > 0 else 1.0, hist)
    if histogram_path:
        with open(histogram_path, "w", newline="") as fh:
            fh.write(report.histogram_csv())
    return report
