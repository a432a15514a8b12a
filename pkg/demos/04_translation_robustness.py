"""
Robustness to translated inputs
===============================

Referencing inputs to the last context frame and outputs to an interpolator
makes predictions follow any global shift. An absolute model has no such
guarantee and drifts when the whole scene moves.
"""

import numpy as np

from deltainterp import metrics, motion, sampling, synth, training
from deltainterp.model import DeltaInterpolator, ModelConfig, mode_label

skeleton = synth.tiny_skeleton()
raw = [w for s in synth.synth_dataset(skeleton, range(8)) for w in motion.make_windows(s, 50, 20)]
stats = motion.normalize_stats(raw)
windows = [motion.apply_normalization(w, stats) for w in raw]
task = metrics.evaluation_task(windows[:16], 15)

cfg = training.TrainConfig(epochs=4, batch_size=16, batches_per_epoch=50, warmup_epochs=1,
                           lr_drop_epoch=3, lr_max=1e-3, seed=0)
sampler = sampling.SamplerConfig(window_len=50, batch_size=16)

for inp, out in (("last", "interp"), ("none", "none")):
    config = ModelConfig(n_joints=skeleton.n_joints, width=64, heads=4, blocks=2, dropout=0.0,
                         input_delta=inp, output_delta=out)
    model = DeltaInterpolator(config, skeleton, seed=0)
    training.train(model, windows, cfg, sampler)
    base = model.predict(task).positions
    print(mode_label(inp, out))
    for dx in (0.5, 1.0, 5.0):
        shift = np.array([dx, 0.0, 0.0])
        moved = task.translated(shift)
        pred = model.predict(moved).positions
        drift = np.abs(pred - base - shift).max()
        err = metrics.l2p(pred, moved.target().positions, stats)
        print(f"  shift {dx:4.1f}: max drift {drift:.2e}, L2P {err:.3f}")
