"""
Baselines and benchmark metrics
===============================

Score the parameter-free interpolators on synthetic motion with L2Q, L2P
and NPSS over the usual transition lengths.
"""

import numpy as np

from deltainterp import baselines, metrics, motion, synth

skeleton = synth.tiny_skeleton()
sequences = synth.synth_dataset(skeleton, range(6), n_frames=200)

# Evaluation windows are 65 frames long; statistics come from 50-frame
# training windows of the same data here, which is enough for a demo.
test = [w for s in sequences for w in motion.make_windows(s, 65, 40)]
train = [w for s in sequences for w in motion.make_windows(s, 50, 20)]
stats = motion.normalize_stats(train)
test = [motion.apply_normalization(w, stats) for w in test]

reports = []
for kind in ("zerovel", "slerp"):
    predictor = baselines.baseline_predictor(kind)
    reports.append(metrics.evaluate(predictor, test, metrics.LENGTHS, stats, model_id=kind))
print(metrics.MetricsReport.table(reports))

# Each evaluation task keeps ten context frames, hides L frames and reveals
# one target frame after the gap.
task = metrics.evaluation_task(test, 15)
print("keys:", task.in_idx.tolist())
print("missing:", task.out_idx.tolist())

# NPSS compares normalized power spectra. Scaling a signal leaves its
# spectrum shape alone, but an added offset moves power into the DC bin.
x = np.sin(np.linspace(0, 6, 30))[None, :, None]
print("npss(2x, x) =", round(metrics.npss(2 * x, x), 6))
print("npss(x + 1, x) =", round(metrics.npss(x + 1, x), 6))
