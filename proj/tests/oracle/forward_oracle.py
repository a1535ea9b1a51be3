#!/usr/bin/env python3
"""Independent numpy reference for the tiny forward pass frozen into
test_charcnn.cpp. Run it to regenerate the expected values."""
import numpy as np

np.set_printoptions(precision=12, floatmode="fixed")

# tiny net: input_len 6, embed 2, one conv block (2 filters, width 3),
# pool 3, SE hidden 1, one dense layer of 3, two classes
ids = np.array([2, 3, 2, 3, 0, 0])

embed = np.array([
    [0.0, 0.0],    # PAD
    [0.1, -0.2],   # UNK
    [0.3, 0.5],    # 'a'
    [-0.4, 0.2],   # 'b'
])

conv_w = np.array([
    [[0.1, 0.2, -0.1], [0.0, 0.3, 0.1]],
    [[-0.2, 0.1, 0.4], [0.2, -0.3, 0.1]],
])  # f x c x k
conv_b = np.array([0.05, -0.05])

se_w1 = np.array([[0.4, -0.3]])     # H x F
se_b1 = np.array([0.1])
se_w2 = np.array([[0.6], [-0.5]])   # F x H
se_b2 = np.array([0.2, 0.1])

fc_w = np.array([
    [0.1, -0.2, 0.3, 0.4],
    [0.5, 0.1, -0.3, 0.2],
    [-0.1, 0.2, 0.1, -0.4],
])
fc_b = np.array([0.01, -0.02, 0.03])

out_w = np.array([
    [0.2, -0.1, 0.4],
    [-0.3, 0.2, 0.1],
])
out_b = np.array([0.0, 0.1])

x = embed[ids].T                      # channels x time
T = x.shape[1]
K = conv_w.shape[2]
pad = (K - 1) // 2
xp = np.pad(x, ((0, 0), (pad, pad)))
conv = np.stack([
    np.array([(xp[:, t:t + K] * conv_w[f]).sum() for t in range(T)]) + conv_b[f]
    for f in range(conv_w.shape[0])
])
relu = np.maximum(conv, 0.0)
pool = relu.reshape(relu.shape[0], -1, 3).max(axis=2)
squeeze = pool.mean(axis=1)
hidden = np.maximum(se_w1 @ squeeze + se_b1, 0.0)
gate = 1.0 / (1.0 + np.exp(-(se_w2 @ hidden + se_b2)))
gated = pool * gate[:, None]
flat = gated.reshape(-1)              # channel-major
fc = np.maximum(fc_w @ flat + fc_b, 0.0)
logits = out_w @ fc + out_b
probs = np.exp(logits - logits.max())
probs /= probs.sum()

print("conv row0 :", conv[0])
print("conv row1 :", conv[1])
print("pool      :", pool.reshape(-1))
print("squeeze   :", squeeze)
print("gate      :", gate)
print("flat      :", flat)
print("fc        :", fc)
print("logits    :", logits)
print("probs     :", probs)
