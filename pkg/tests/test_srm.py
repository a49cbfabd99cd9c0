import numpy as np
import pytest

from qtag.attacks import AttackSpec, apply_attack
from qtag.circuit import Circuit, compact_columns
from qtag.codec import DEFAULT_SHAPE, encode_circuit
from qtag.errors import ConfigInvalid, ConfigMismatch
from qtag.pipeline import embed, generate_plain
from qtag.srm import STANDARD, Candidate, SrmConfig, detect_watermark, extract_messages, srm_candidates
from qtag.watermark import DetectionPolicy, WatermarkKey, ecc_encode, reverse_sample


def _cols(z):
    return [z[..., j] for j in range(z.shape[-1])]


def test_candidate_examples():
    z = np.stack([np.full((1, 1), c, dtype=float) for c in (1, 2, 3, 4)], axis=-1)
    descs, lats = srm_candidates(z, SrmConfig(w_max=1), dedupe=False)
    assert descs[0] == STANDARD and np.array_equal(lats[0], z)
    i2 = descs.index(Candidate("insert", 2, 1))
    assert lats[i2].ravel().tolist() == [1, 2, 0, 3]
    i4 = descs.index(Candidate("insert", 4, 1))
    assert np.array_equal(lats[i4], z)
    descs_d, _ = srm_candidates(z, SrmConfig(w_max=1))
    assert Candidate("insert", 4, 1) not in descs_d


def test_candidate_count_and_order():
    cfg = SrmConfig()
    assert cfg.candidate_count(48) == 148
    assert SrmConfig(directions="bidirectional").candidate_count(48) == 295
    z = np.random.default_rng(0).standard_normal(DEFAULT_SHAPE)
    descs, lats = srm_candidates(z, cfg, dedupe=False)
    assert len(descs) == 148 and lats.shape == (148,) + DEFAULT_SHAPE
    assert descs[1:4] == [Candidate("insert", 0, 1), Candidate("insert", 1, 1), Candidate("insert", 2, 1)]
    assert descs[50] == Candidate("insert", 0, 2)
    descs, _ = srm_candidates(z, SrmConfig(directions="bidirectional"), dedupe=False)
    assert descs[148] == Candidate("delete", 0, 1)
    assert descs[-1] == Candidate("delete", 48, 3)


def test_delete_candidate_pads_right():
    z = np.arange(1, 6, dtype=float).reshape(1, 1, 5)
    descs, lats = srm_candidates(z, SrmConfig(w_max=2, directions="bidirectional"), dedupe=False)
    i = descs.index(Candidate("delete", 1, 2))
    assert lats[i].ravel().tolist() == [1, 4, 5, 0, 0]


def test_disabled_srm_only_standard():
    z = np.ones(DEFAULT_SHAPE)
    descs, _ = srm_candidates(z, SrmConfig(enabled=False))
    assert descs == [STANDARD]


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        SrmConfig(w_max=0)
    with pytest.raises(ConfigInvalid):
        SrmConfig(directions="sideways")


def test_clean_detection_exact(zero_backend, schedule):
    for seed in range(30):
        key = WatermarkKey.generate(24, seed=seed)
        rep = detect_watermark(embed(key, zero_backend, schedule).circuit, key, DetectionPolicy(),
                               zero_backend, schedule)
        assert rep.detected and rep.best_similarity == 1.0
        assert rep.best_candidate == STANDARD and rep.candidates_tried == 1
        assert np.array_equal(rep.extracted_message, key.message)


def test_deleted_column_recovered_by_insert_candidate(zero_backend, schedule):
    tried = hits = 0
    offs = []
    for seed in range(40):
        key = WatermarkKey.generate(24, seed=100 + seed)
        c = embed(key, zero_backend, schedule).circuit
        if compact_columns(c) != c:
            continue                    # pre-existing empty columns would add further shifts
        col = seed % 8
        cut = compact_columns(Circuit(np.delete(c.grid, col, axis=1)))
        off = detect_watermark(cut, key, DetectionPolicy(), zero_backend, schedule, SrmConfig(enabled=False))
        on = detect_watermark(cut, key, DetectionPolicy(), zero_backend, schedule)
        offs.append(off.best_similarity)
        tried += 1
        hits += on.detected
        assert on.best_candidate.direction == "insert"
    assert tried >= 20 and hits == tried
    assert abs(np.mean(offs) - 0.5) < 0.15


def test_shift_restoration_bound(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=5)
    n = 1536
    cw = ecc_encode(key.message, key, n)
    from qtag.codec import unflatten
    z = unflatten(np.where(cw == 1, 1.0, -1.0))
    fc, fh, fw = DEFAULT_SHAPE
    for w in (1, 2, 3):
        for i in (0, 10, 40):
            shifted = np.concatenate([z[..., :i], z[..., i + w:], np.zeros((fc, fh, w))], axis=-1)
            descs, lats = srm_candidates(shifted, SrmConfig(), dedupe=False)
            cand = lats[descs.index(Candidate("insert", i, w))]
            agree = np.mean(reverse_sample(cand) == cw)
            assert agree >= (n - w * fc * fh) / n


def test_zero_pad_reads_as_one():
    assert np.all(reverse_sample(np.zeros(DEFAULT_SHAPE)) == 1)


def test_early_stop_and_best_modes(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=3)
    c = embed(key, zero_backend, schedule).circuit
    cut = Circuit(np.delete(c.grid, 10, axis=1))
    first = detect_watermark(cut, key, DetectionPolicy(), zero_backend, schedule, SrmConfig())
    best = detect_watermark(cut, key, DetectionPolicy(), zero_backend, schedule, SrmConfig(early_stop=False))
    assert first.detected and best.detected
    assert best.best_similarity >= first.best_similarity
    assert best.candidates_tried >= first.candidates_tried


def test_chunked_detection_matches_sequential(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=8)
    c = apply_attack(embed(key, zero_backend, schedule).circuit, AttackSpec("replace", 3, seed=2))
    cfg = SrmConfig(directions="bidirectional", early_stop=False)
    rep = detect_watermark(c, key, DetectionPolicy(), zero_backend, schedule, cfg)
    z0 = encode_circuit(c).latent
    descs, lats = srm_candidates(z0, cfg)
    sims = [float(np.mean(extract_messages(l[None], key, 24, zero_backend, schedule)[0] == key.message))
            for l in lats]
    accepted = [i for i, s in enumerate(sims) if s >= 0.7916]
    if accepted:
        best = max(accepted, key=lambda i: (sims[i], -i))
    else:
        best = int(np.argmax(sims))
    assert rep.best_candidate == descs[best] and rep.best_similarity == sims[best]
    assert rep.candidates_tried == len(descs)


def test_unwatermarked_usually_rejected(zero_backend, schedule):
    det = 0
    for i in range(100):
        key = WatermarkKey.generate(24, seed=500 + i)
        c = generate_plain(900 + i, zero_backend, schedule).circuit
        det += detect_watermark(c, key, DetectionPolicy(), zero_backend, schedule, SrmConfig(enabled=False)).detected
    assert det <= 3


def test_detection_deterministic(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=9)
    c = apply_attack(embed(key, zero_backend, schedule).circuit, AttackSpec("insert", 1, seed=1))
    a = detect_watermark(c, key, DetectionPolicy(), zero_backend, schedule, SrmConfig(directions="bidirectional"))
    b = detect_watermark(c, key, DetectionPolicy(), zero_backend, schedule, SrmConfig(directions="bidirectional"))
    assert a.to_dict() == b.to_dict()


def test_config_mismatch(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=0)
    c = embed(key, zero_backend, schedule).circuit
    with pytest.raises(ConfigMismatch):
        detect_watermark(c, WatermarkKey.generate(12, seed=0), DetectionPolicy(), zero_backend, schedule)
    with pytest.raises(ConfigMismatch):
        detect_watermark(Circuit.empty(5, 3), key, DetectionPolicy(), zero_backend, schedule)


def test_report_serialization(zero_backend, schedule):
    key = WatermarkKey.generate(24, seed=1)
    c = embed(key, zero_backend, schedule).circuit
    d = detect_watermark(c, key, DetectionPolicy(), zero_backend, schedule).to_dict()
    assert d["best_candidate"] == "standard" and d["extracted_message"] == "".join(map(str, key.message))
    assert d["detected"] is True and d["truncated"] is False
