import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltainterp import geometry as geo
from deltainterp import metrics, motion, synth
from deltainterp.errors import ContractError, DataError, IngestionError
from deltainterp.motion import InbetweenTask, MotionSequence, PositionSequence


def seq_of(skeleton, n=40, seed=0, kind="figure-eight"):
    return synth.synth_motion(kind, skeleton, n, seed)


# -- CSV ------------------------------------------------------------------------


def test_csv_round_trip(tmp_path, skeleton):
    seq = seq_of(skeleton)
    motion.save_csv(seq, tmp_path / "a.csv")
    back = motion.load_csv(tmp_path / "a.csv", skeleton)
    np.testing.assert_allclose(back.root_pos, seq.root_pos, atol=1e-12)
    np.testing.assert_allclose(back.global_positions(), seq.global_positions(), atol=1e-6)
    np.testing.assert_allclose(back.global_rotations(), seq.global_rotations(), atol=1e-6)


def test_single_row_file(tmp_path, skeleton):
    seq = seq_of(skeleton).window(3, 1)
    motion.save_csv(seq, tmp_path / "one.csv")
    back = motion.load_csv(tmp_path / "one.csv", skeleton)
    assert len(back) == 1
    np.testing.assert_allclose(back.global_positions(), seq.global_positions(), atol=1e-6)


def test_alternating_signs_load_continuous(tmp_path, skeleton):
    seq = seq_of(skeleton, n=12)
    motion.save_csv(seq, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    for r in rows[2::2]:
        r[4:] = [repr(-float(v)) for v in r[4:]]
    with open(tmp_path / "b.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    back = motion.load_csv(tmp_path / "b.csv", skeleton)
    q = back.local_quaternions()
    assert np.all((q[1:] * q[:-1]).sum(-1) > 0)
    np.testing.assert_allclose(back.global_positions(), seq.global_positions(), atol=1e-6)


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_nan_row_is_reported(tmp_path, skeleton):
    seq = seq_of(skeleton, n=10)
    motion.save_csv(seq, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    rows[7][5] = "nan"
    _write_rows(tmp_path / "b.csv", rows)
    with pytest.raises(IngestionError, match="row 7"):
        motion.load_csv(tmp_path / "b.csv", skeleton)


def test_non_unit_quaternion_is_reported(tmp_path, skeleton):
    seq = seq_of(skeleton, n=5)
    motion.save_csv(seq, tmp_path / "a.csv")
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    rows[3][4] = repr(float(rows[3][4]) * 1.01)
    _write_rows(tmp_path / "b.csv", rows)
    with pytest.raises(IngestionError, match="row 3"):
        motion.load_csv(tmp_path / "b.csv", skeleton)


def test_missing_column_is_reported(tmp_path, skeleton):
    seq = seq_of(skeleton, n=5)
    motion.save_csv(seq, tmp_path / "a.csv")
    rows = [r[:-1] for r in csv.reader(open(tmp_path / "a.csv"))]
    _write_rows(tmp_path / "b.csv", rows)
    with pytest.raises(IngestionError, match="j4_qz"):
        motion.load_csv(tmp_path / "b.csv", skeleton)


def test_gaps_are_empty_rows(tmp_path, skeleton):
    seq = seq_of(skeleton, n=10)
    mask = np.ones(10, bool)
    mask[3:6] = False
    motion.save_csv(seq, tmp_path / "g.csv", key_mask=mask)
    back, got = motion.load_csv_with_gaps(tmp_path / "g.csv", skeleton)
    np.testing.assert_array_equal(got, mask)
    np.testing.assert_allclose(back.root_pos[mask], seq.root_pos[mask], atol=1e-12)
    with pytest.raises(IngestionError, match="row 4"):
        motion.load_csv(tmp_path / "g.csv", skeleton)


def test_position_csv_round_trip(tmp_path, rng):
    seq = PositionSequence(rng.standard_normal((6, 4, 3)))
    motion.save_position_csv(seq, tmp_path / "p.csv")
    back = motion.load_position_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.positions, seq.positions)


def test_dataset_directory(tmp_path, skeleton):
    skeleton.save(tmp_path / "skeleton.json")
    for s in range(2):
        motion.save_csv(seq_of(skeleton, seed=s), tmp_path / f"m{s}.csv")
    sk, seqs = motion.load_dataset(tmp_path)
    assert sk.names == skeleton.names and len(seqs) == 2


# -- windows --------------------------------------------------------------------


@pytest.mark.parametrize("n,starts", [(65, [0]), (90, [0, 20, 40]), (50, [0])])
def test_window_examples(skeleton, n, starts):
    seq = seq_of(skeleton, n=n)
    wins = motion.make_windows(seq, 50, 20)
    assert len(wins) == motion.count_windows(n, 50, 20) == len(starts)
    for w, s in zip(wins, starts):
        np.testing.assert_array_equal(w.root_pos, seq.root_pos[s:s + 50])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 80), st.integers(1, 30), st.integers(1, 25))
def test_windows_never_reorder(n, length, offset):
    seq = PositionSequence(np.arange(n * 3, dtype=float).reshape(n, 1, 3))
    wins = motion.make_windows(seq, length, offset)
    assert len(wins) == motion.count_windows(n, length, offset)
    for k, w in enumerate(wins):
        np.testing.assert_array_equal(w.positions, seq.positions[k * offset:k * offset + length])


# -- normalisation --------------------------------------------------------------


def test_normalized_window_faces_plus_z_and_is_centered(skeleton):
    seq = seq_of(skeleton, n=50, kind="sinusoid-walk")
    norm = motion.normalize_window(seq)
    assert np.abs(norm.root_pos[:10, [0, 2]].mean(0)).max() < 1e-9
    pos, rot = geo.fk_matrices(skeleton, norm.root_pos[:10], norm.rot6[:10])
    f = motion.facing_direction(pos, rot, motion.hip_joints(skeleton))
    np.testing.assert_allclose(f / np.linalg.norm(f), [0, 0, 1], atol=1e-9)


def test_normalization_idempotent_and_translation_free(skeleton):
    seq = seq_of(skeleton, n=50, seed=4)
    once = motion.normalize_window(seq)
    twice = motion.normalize_window(once)
    np.testing.assert_allclose(twice.global_positions(), once.global_positions(), atol=1e-6)
    moved = motion.normalize_window(seq.translated([3.0, 0.0, -2.0]))
    np.testing.assert_allclose(moved.global_positions(), once.global_positions(), atol=1e-9)


def test_transform_round_trip(skeleton):
    seq = seq_of(skeleton, n=30, seed=2)
    offset, ry = motion.normalization_frame(seq)
    back = motion.untransform_sequence(motion.transform_sequence(seq, offset, ry), offset, ry)
    np.testing.assert_allclose(back.global_positions(), seq.global_positions(), atol=1e-9)


def test_stats_and_metric_invariance_to_xz_translation(skeleton):
    seqs = [seq_of(skeleton, n=50, seed=s) for s in range(3)]
    stats = motion.normalize_stats(seqs)
    assert stats.std.shape == (3 * skeleton.n_joints,)
    noisy = [motion.MotionSequence(skeleton, s.root_pos + 0.01, s.rot6) for s in seqs]

    def score(shift):
        a = [motion.apply_normalization(s.translated(shift), stats).global_positions() for s in seqs]
        b = [motion.apply_normalization(s.translated(shift), stats).global_positions() for s in noisy]
        return metrics.l2p(np.stack(b), np.stack(a), stats)

    assert score([0, 0, 0]) == pytest.approx(score([5.0, 0.0, -7.0]), abs=1e-9)


def test_stats_json_round_trip(tmp_path, skeleton):
    stats = motion.normalize_stats([seq_of(skeleton, n=50)])
    stats.save(tmp_path / "s.json")
    back = motion.NormStats.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.std, stats.std)


# -- tasks ----------------------------------------------------------------------


def test_task_index_sets(skeleton):
    seq = seq_of(skeleton, n=16)
    task = InbetweenTask.from_sequences([seq], list(range(10)) + [15])
    assert task.out_idx.tolist() == [10, 11, 12, 13, 14]
    assert task.ref_index == 9
    assert set(task.in_idx) | set(task.out_idx) == set(range(16))


def test_task_rejects_bad_indices(skeleton):
    seq = seq_of(skeleton, n=5)
    with pytest.raises(ContractError):
        InbetweenTask.from_sequences([seq], [0, 9])
    with pytest.raises(ContractError):
        InbetweenTask.from_sequences([seq], [])


# -- synthetic data -------------------------------------------------------------


@pytest.mark.parametrize("kind", synth.KINDS)
def test_synth_deterministic(skeleton, kind):
    a, b = seq_of(skeleton, seed=11, kind=kind), seq_of(skeleton, seed=11, kind=kind)
    assert a.root_pos.tobytes() == b.root_pos.tobytes()
    assert a.rot6.tobytes() == b.rot6.tobytes()


def test_sinusoid_walk_moves_forward(skeleton):
    seq = seq_of(skeleton, n=100, kind="sinusoid-walk", seed=5)
    assert np.all(np.diff(seq.root_pos[:, 0]) > 0)


def test_synth_rotations_never_degenerate():
    sk = synth.humanoid_skeleton()
    for seed in range(100):
        seq = synth.synth_motion(synth.KINDS[seed % 3], sk, 30, seed)
        geo.check_rot6(seq.rot6)


def test_sequence_requires_matching_joints(skeleton):
    with pytest.raises(DataError):
        MotionSequence(skeleton, np.zeros((3, 3)), np.zeros((3, 2, 6)))
