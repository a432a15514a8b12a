import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltainterp import baselines, geometry as geo, metrics, motion
from deltainterp.errors import ContractError, DimensionError
from deltainterp.metrics import MetricsReport, l2p, l2q, npss


def npss_oracle(pred, target):
    """Direct DFT with explicit loops; independent of the vectorized version."""
    S, T = len(pred), len(pred[0])
    C = len(pred[0][0])
    num = den = 0.0
    emds = []
    for s in range(S):
        for c in range(C):
            cdfs, totals = [], []
            for x in (pred, target):
                power = []
                for k in range(T):
                    acc = 0j
                    for t in range(T):
                        acc += x[s][t][c] * cmath.exp(-2j * math.pi * k * t / T)
                    power.append(abs(acc) ** 2)
                total = sum(power)
                run, cdf = 0.0, []
                for p in power:
                    run += p / total if total > 0 else 0.0
                    cdf.append(run)
                cdfs.append(cdf)
                totals.append(total)
            emd = sum(abs(a - b) for a, b in zip(*cdfs))
            emds.append(emd)
            num += emd * totals[1]
            den += totals[1]
    return num / den if den > 0 else sum(emds) / len(emds)


# -- L2Q / L2P ------------------------------------------------------------------


def test_l2q_half_turn_example():
    pred = np.array([1.0, 0, 0, 0]).reshape(1, 1, 1, 4)
    target = np.array([0.0, 1, 0, 0]).reshape(1, 1, 1, 4)
    assert l2q(pred, target) == pytest.approx(math.sqrt(2))


def test_l2p_three_four_five():
    target = np.zeros((1, 1, 2, 3))
    pred = target.copy()
    pred[0, 0, 1] = [3.0, 4.0, 0.0]
    assert l2p(pred, target) == 5.0


def test_l2p_uses_stats():
    stats = motion.NormStats(mean=np.zeros(3), std=np.full(3, 2.0))
    pred = np.array([6.0, 8.0, 0.0]).reshape(1, 1, 1, 3)
    assert l2p(pred, np.zeros_like(pred), stats) == pytest.approx(5.0)


def test_l2q_sign_flip_invariance(rng):
    q = geo.quat_normalize(rng.standard_normal((3, 4, 2, 4)))
    t = geo.quat_normalize(rng.standard_normal((3, 4, 2, 4)))
    flipped = q.copy()
    flipped[1, 2, 0] *= -1
    assert l2q(flipped, t) == pytest.approx(l2q(q, t), abs=1e-12)


def test_zero_iff_equal(rng):
    for _ in range(1000):
        shape = (rng.integers(1, 3), rng.integers(2, 6), rng.integers(1, 3))
        t = geo.quat_normalize(rng.standard_normal(shape + (4,)))
        p = geo.quat_normalize(rng.standard_normal(shape + (4,)))
        pos_t = rng.standard_normal(shape + (3,))
        pos_p = rng.standard_normal(shape + (3,))
        assert l2q(t, t) == 0 and l2p(pos_t, pos_t) == 0 and npss(t, t) == 0
        assert l2q(p, t) > 0 and l2p(pos_p, pos_t) > 0


def test_shape_errors():
    with pytest.raises(DimensionError):
        l2p(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 4, 3)))
    with pytest.raises(DimensionError):
        l2q(np.zeros((2, 4)), np.zeros((2, 4)))
    with pytest.raises(ContractError):
        npss(np.zeros((1, 1, 4)), np.zeros((1, 1, 4)))


# -- NPSS -----------------------------------------------------------------------


def test_npss_matches_direct_dft_oracle():
    rng = np.random.default_rng(77)
    for _ in range(100):
        S, T, C = rng.integers(1, 4), rng.integers(2, 17), rng.integers(1, 5)
        t = rng.standard_normal((S, T, C))
        p = t + rng.standard_normal((S, T, C)) * rng.uniform(0, 2)
        assert npss(p, t) == pytest.approx(npss_oracle(p.tolist(), t.tolist()), abs=1e-9)


def test_npss_constant_offset_matches_oracle(rng):
    t = rng.standard_normal((2, 9, 3))
    p = t + np.array([0.5, -1.0, 2.0])
    assert npss(p, t) == pytest.approx(npss_oracle(p.tolist(), t.tolist()), abs=1e-9)
    assert npss(p, t) > 0


def test_npss_is_a_spectral_shape_score(rng):
    # only normalized spectra are compared, so scaling a channel costs nothing
    t = rng.standard_normal((2, 8, 3))
    assert npss(3.0 * t, t) == pytest.approx(0.0, abs=1e-12)


def test_npss_zero_power_channels_are_safe():
    t = np.zeros((1, 6, 2))
    p = np.ones((1, 6, 2))
    assert np.isfinite(npss(p, t))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_npss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    shape = (rng.integers(1, 3), rng.integers(2, 12), rng.integers(1, 4), 4)
    assert npss(rng.standard_normal(shape), rng.standard_normal(shape)) >= 0


# -- reports --------------------------------------------------------------------


def test_report_json_round_trip():
    rep = MetricsReport(dataset_id="synth", model_id="Last:I", seed_count=2)
    rep.add(5, 0.1, 0.2, 0.003)
    rep.add(30, None, 1.5, 0.25)
    back = MetricsReport.from_dict(json.loads(rep.to_json()))
    assert back == rep


def test_table_layout():
    a = MetricsReport(model_id="Zero-Vel")
    b = MetricsReport(model_id="SLERP")
    for r in (a, b):
        for L in metrics.LENGTHS:
            r.add(L, 0.5, 1.25, 0.0123)
    b.rows[30]["l2q"] = None
    lines = MetricsReport.table([a, b]).splitlines()
    assert "L2Q" in lines[0] and "NPSS" in lines[0]
    assert lines[1].split() == ["Model", "|", "5", "15", "30", "|", "5", "15", "30", "|", "5", "15", "30"]
    assert lines[3].split()[:4] == ["Zero-Vel", "|", "0.50", "0.50"]
    assert lines[4].split()[4] == "-"
    assert len({len(line) for line in lines}) == 1


# -- evaluation -----------------------------------------------------------------


def test_evaluation_tasks(windows):
    task = metrics.evaluation_task(windows, 15)
    assert task.n_frames == 26 and task.out_idx.tolist() == list(range(10, 25))
    strided = metrics.evaluation_task(windows, 5, style="anidance")
    assert strided.in_idx.tolist() == list(range(0, 49, 6))
    with pytest.raises(ContractError):
        metrics.evaluation_task(windows, 45)


def test_evaluate_baselines(windows):
    stats = motion.normalize_stats(windows)
    zv = metrics.evaluate(baselines.zero_velocity, windows, stats=stats, model_id="zv")
    sl = metrics.evaluate(baselines.slerp_interpolate, windows, stats=stats, model_id="slerp")
    assert sorted(zv.rows) == [5, 15, 30]
    for L in metrics.LENGTHS:
        assert sl.get(L, "l2p") < zv.get(L, "l2p")
        assert all(v >= 0 for v in zv.rows[L].values())
    # longer gaps are harder
    assert zv.get(5, "l2p") < zv.get(30, "l2p")


def test_evaluate_averages_predictors(windows):
    a = metrics.evaluate(baselines.zero_velocity, windows, lengths=[5])
    b = metrics.evaluate(baselines.slerp_interpolate, windows, lengths=[5])
    both = metrics.evaluate([baselines.zero_velocity, baselines.slerp_interpolate], windows, lengths=[5])
    assert both.seed_count == 2
    for key in ("l2q", "l2p", "npss"):
        assert both.get(5, key) == pytest.approx((a.get(5, key) + b.get(5, key)) / 2)


def test_evaluate_position_only(rng):
    seqs = [motion.PositionSequence(np.cumsum(rng.standard_normal((40, 4, 3)), 0)) for _ in range(3)]
    rep = metrics.evaluate(baselines.pos_lerp, seqs, lengths=[5], style="anidance")
    assert rep.get(5, "l2q") is None and rep.get(5, "l2p") > 0
