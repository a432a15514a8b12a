"""
Command-line walkthrough
========================

Drive the ``deltainterp`` command from Python: synthesize data, train with
the tiny preset, score the checkpoint and fill a gap in a CSV file.
"""

import tempfile
from pathlib import Path

import numpy as np

from deltainterp import cli, motion
from deltainterp.geometry import Skeleton

work = Path(tempfile.mkdtemp(prefix="deltainterp-"))
data, run = work / "data", work / "run"


def sh(*args):
    print("$ deltainterp", " ".join(str(a) for a in args))
    code = cli.main([str(a) for a in args])
    print(f"[exit {code}]\n")
    return code


sh("synth", "--out", data, "--frames", "150", "--count", "2")
sh("train", "--config", "tiny", "--data", data, "--out", run)
sh("baseline", "--data", data, "--out", work / "baselines", "--lengths", "5,15,30")
sh("eval", "--checkpoint", run, "--data", data, "--out", work / "eval", "--lengths", "5,15,30")

# A gap is a run of rows whose pose cells are empty.
skeleton = Skeleton.load(data / "skeleton.json")
seq = motion.load_csv(data / "figure-eight-0.csv", skeleton).window(0, 40)
mask = np.ones(40, bool)
mask[15:30] = False
motion.save_csv(seq, work / "gappy.csv", key_mask=mask)
sh("inbetween", "--checkpoint", run, "--input", work / "gappy.csv", "--out", work / "filled.csv")

# Layouts the model cannot serve are refused with a one-line error.
mask[30:] = False
motion.save_csv(seq, work / "open_end.csv", key_mask=mask)
sh("inbetween", "--checkpoint", run, "--input", work / "open_end.csv", "--out", work / "x.csv")

# Outputs are never silently replaced.
sh("train", "--config", "tiny", "--data", data, "--out", run)
print("artifacts in", work)
