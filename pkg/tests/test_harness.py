import math

import numpy as np
import pytest

from qtag.attacks import AttackSpec
from qtag.errors import ConfigInvalid, IndivisibleCapacity
from qtag.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    read_csv,
    rows_to_csv,
    run_calibration,
    run_capacity_sweep,
    run_false_accept,
    run_robustness_bench,
    run_srm_ablation,
    run_steps_sweep,
    union_bound,
)
from qtag.srm import SrmConfig
from qtag.watermark import fpr_binomial, minimal_tau_bits


def small(**kw):
    kw.setdefault("trials", 30)
    return ExperimentConfig(**kw)


def test_trials_zero_rejected():
    with pytest.raises(ConfigInvalid):
        run_robustness_bench(ExperimentConfig(trials=0))
    with pytest.raises(ConfigInvalid):
        ExperimentConfig(key_mode="shared").validate()
    with pytest.raises(IndivisibleCapacity):
        ExperimentConfig(capacity=7).validate()


def test_config_json_round_trip(tmp_path):
    cfg = ExperimentConfig(trials=5, attacks=[AttackSpec("replace", 2, seed=1)],
                           srm=SrmConfig(w_max=2, directions="bidirectional"), master_seed=9)
    import json
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_dict({"trails": 3})


def test_replace_grid_shape(tmp_path):
    out = tmp_path / "bench.csv"
    cfg = small(attacks=[AttackSpec("replace", c) for c in range(1, 6)], output=str(out))
    rows = run_robustness_bench(cfg)
    assert len(rows) == 5
    parsed = read_csv(out)
    assert len(parsed) == 5
    assert list(parsed[0]) == CSV_COLUMNS
    for r in parsed:
        assert 0.0 <= float(r["tpr"]) <= 1.0
        assert float(r["tpr"]) == int(r["detections"]) / int(r["trials"])


def test_clean_rows_exact():
    rows = run_robustness_bench(small(attacks=[AttackSpec("append", 0)]))
    assert rows[0].tpr == 1.0 and rows[0].mean_bit_accuracy == 1.0


def test_default_grid_has_clean_row_first():
    rows = run_robustness_bench(small(trials=3))
    assert rows[0].attack_kind == "none"
    assert [(r.attack_kind, r.attack_count) for r in rows[1:]] == (
        [("replace", c) for c in range(1, 6)] + [("append", c) for c in range(1, 6)]
        + [("insert", 1), ("insert", 2)] + [("delete", c) for c in range(1, 4)])


def test_csv_header_labels_reference_backend():
    cfg = small(trials=3)
    text = rows_to_csv(run_robustness_bench(cfg), cfg)
    assert text.startswith("# reference backend 'zero' (not a trained generator)")
    assert "wall_time" not in text
    assert "wall_time" in rows_to_csv([], cfg, include_timing=True)


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    attacks = [AttackSpec("replace", 2), AttackSpec("insert", 1), AttackSpec("delete", 1)]
    run_robustness_bench(small(attacks=attacks, output=str(a), master_seed=4))
    run_robustness_bench(small(attacks=attacks, output=str(b), master_seed=4, n_jobs=3))
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    run_robustness_bench(small(attacks=attacks, output=str(c), master_seed=5))
    assert c.read_bytes() != a.read_bytes()


def test_fixed_key_mode_gives_identical_circuits_under_zero_noise():
    rows = run_robustness_bench(small(trials=10, key_mode="fixed", attacks=[AttackSpec("append", 0)]))
    assert rows[0].tpr == 1.0
    from qtag.harness import watermarked_circuits
    cfg = small(trials=5, key_mode="fixed")
    circs = watermarked_circuits(cfg, cfg.trial_keys(5, "wm"))
    assert all(c == circs[0] for c in circs)


def test_capacity_sweep():
    rows = run_capacity_sweep(small(trials=10), replace_counts=[1])
    assert [r.capacity for r in rows] == [12, 12, 16, 16, 24, 24, 32, 32, 48, 48]
    for r in rows[::2]:
        assert r.tpr == 1.0
    for k in (12, 16, 24, 32, 48):
        t = minimal_tau_bits(k)
        assert fpr_binomial(t, k) <= 1e-3 < fpr_binomial(t - 1, k)
    with pytest.raises(IndivisibleCapacity):
        run_capacity_sweep(small(trials=2), capacities=(24, 25))


def test_steps_sweep():
    rows = run_steps_sweep(small(trials=5), steps=(10, 100))
    assert [r.steps for r in rows] == [10, 100]
    assert all(r.tpr == 1.0 for r in rows)


def test_steps_sweep_linear_backend():
    rows = run_steps_sweep(small(trials=5, backend="linear:0"), steps=(10, 50))
    assert all(r.tpr == 1.0 for r in rows)


def test_srm_ablation_gap():
    rows = run_srm_ablation(small(trials=60), widths=(1, 3))
    off = [r for r in rows if r.experiment == "srm_off"]
    on = [r for r in rows if r.experiment == "srm_on"]
    for a, b in zip(off, on):
        assert b.tpr - a.tpr >= 0.4
        assert b.tpr == 1.0


def test_false_accept_and_union_bound():
    cfg = small(trials=200)
    row = run_false_accept(cfg)
    assert row.experiment == "false_accept" and 0 <= row.tpr <= 1
    assert union_bound(cfg) == pytest.approx(148 * 12951 / 2**24)
    assert union_bound(small(srm=SrmConfig(enabled=False))) == pytest.approx(12951 / 2**24)
    standard = run_false_accept(small(trials=200, srm=SrmConfig(enabled=False)))
    assert standard.tpr <= 0.03


def test_calibration_bypass():
    rep = run_calibration(100, 0, 1e-3, small(), mu0=9.0, sigma0=2.43)
    assert rep.result.th == pytest.approx(16.51, abs=0.05)
    assert rep.result.mu1 == 24.0 and rep.result.sigma1 == 0.0
    d = rep.to_dict()
    assert d["tau_bits"] == 19
    assert d["fpr_strict"] == fpr_binomial(19, 24) and d["fpr_accept"] == fpr_binomial(18, 24)


def test_calibration_fit_and_histogram(tmp_path):
    path = tmp_path / "hist.csv"
    n = 600
    rep = run_calibration(100, n, 1e-3, small(), histogram_path=path)
    se = math.sqrt(24 / 4 / n)
    assert abs(rep.result.mu0 - 12) <= 3 * se
    assert rep.result.sigma0 == pytest.approx(math.sqrt(6), rel=0.15)
    assert rep.result.th > rep.result.mu0
    rows = read_csv(path)
    assert len(rows) == 25
    assert sum(int(r["unwatermarked"]) for r in rows) == n
    assert int(rows[24]["watermarked"]) == 100


def test_calibration_needs_samples():
    with pytest.raises(ConfigInvalid):
        run_calibration(50, 500, 1e-3, small())
    with pytest.raises(ConfigInvalid):
        run_calibration(500, 50, 1e-3, small())


def test_calibration_fixed_key_is_biased_but_reported():
    rep = run_calibration(100, 400, 1e-3, small(key_mode="fixed"))
    assert np.isfinite(rep.result.th)
