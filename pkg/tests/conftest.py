import numpy as np
import pytest

from deltainterp import motion, sampling, synth
from deltainterp.geometry import Skeleton
from deltainterp.model import DeltaInterpolator, ModelConfig


def tiny_config(n_joints=5, **kw):
    base = dict(n_joints=n_joints, width=64, heads=4, blocks=2, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


def three_joint_skeleton():
    return Skeleton(["Hips", "Spine", "Head"], [-1, 0, 1],
                    [[0, 0, 0], [0, 0.5, 0.1], [0.05, 0.4, 0]])


def lafan_task(windows, n_in, context=10):
    total = context + n_in + 1
    return motion.InbetweenTask.from_sequences(
        [w.window(0, total) for w in windows], sampling.key_indices(context, n_in, 1))


@pytest.fixture(scope="session")
def skeleton():
    return synth.tiny_skeleton()


@pytest.fixture(scope="session")
def windows(skeleton):
    seqs = synth.synth_dataset(skeleton, range(6), n_frames=60)
    return [motion.normalize_window(w) for s in seqs for w in motion.make_windows(s, 50, 10)]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_model(skeleton):
    return DeltaInterpolator(tiny_config(), skeleton, seed=3)


# -- acceptance summary ----------------------------------------------------------


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines):
            terminalreporter.write_line(line)
