"""Hand derivations of the constants frozen into the C++ tests.

Run with python3; prints each value at full precision.
"""
import math

import numpy as np

# Matrix product [[1,2]] x [[3],[4]].
print("matmul", 1 * 3 + 2 * 4)

# Softmax of [0, ln 3].
e = np.exp([0.0, math.log(3.0)])
print("softmax", e / e.sum())

# Glorot bound for a 100x100 matrix.
print("glorot_bound", math.sqrt(6 / 200))

# Even-count median of [1,2,3,4].
print("median", np.median([1, 2, 3, 4]))

# Population standardization of [1,2,3].
col = np.array([1.0, 2.0, 3.0])
print("standardize", (col - col.mean()) / col.std())

# Same-padded convolution of [1,2,3] with kernel [1,1,1].
print("conv", np.convolve([1, 2, 3], [1, 1, 1], mode="same"))

# Batch norm of {1,3}: mean 2, biased var 1, eps 1e-5.
bn = (np.array([1.0, 3.0]) - 2.0) / math.sqrt(1.0 + 1e-5)
print("batch_norm", bn, 2 * bn + 1)

# GRU with zero weights: z = r = 0.5, candidate 0.
for h_prev in (0.0, 1.0):
    print("gru_step", h_prev, 0.5 * h_prev + 0.5 * 0.0)

# Clamped BCE at y=1, p=1.
print("bce_clamped", -math.log(1 - 1e-7))

# SCCE with true-class probabilities {1, 1/e}.
print("scce_mean", (-math.log(1.0) - math.log(1 / math.e)) / 2)

# First Adam step for g=2 with default hyperparameters.
g = 2.0
m_hat = (0.1 * g) / (1 - 0.9)
v_hat = (0.001 * g * g) / (1 - 0.999)
print("adam_delta", -0.001 * m_hat / (math.sqrt(v_hat) + 1e-8))

# Default architecture parameter count, layer by layer.
d, filters, units, ratio, hidden, classes = 60, 64, 64, 8, 128, 15
concat = 3 * filters
channels = 2 * units
counts = {
    "conv": sum(k * filters + filters for k in (3, 5, 7)),
    "batch_norm_trainable": 2 * concat,
    "bigru": 2 * (concat * 3 * units + units * 3 * units + 3 * units),
    "temporal_attention": d * d + d,
    "channel_attention": channels * (channels // ratio) + channels // ratio + (channels // ratio) * channels + channels,
    "hidden": channels * hidden + hidden,
    "out": hidden * classes + classes,
}
print("param_counts", counts, sum(counts.values()))

# Patience rule on the scripted validation sequence.
seq = [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99]
best, wait = math.inf, 0
for epoch, loss in enumerate(seq, 1):
    if loss < best:
        best, best_epoch, wait = loss, epoch, 0
    else:
        wait += 1
    if wait >= 5:
        print("early_stop", epoch, best_epoch)
        break

# Report for cm [[1,0],[1,1]].
cm = np.array([[1, 0], [1, 1]])
p = np.diag(cm) / cm.sum(axis=0)
r = np.diag(cm) / cm.sum(axis=1)
f = 2 * p * r / (p + r)
print("report", p, r, f, np.trace(cm) / cm.sum(), f.mean())
