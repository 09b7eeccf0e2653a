"""Central finite differences used as the gradient oracle throughout the tests."""
import numpy as np


def central_diff(f, x, h=1e-3, idx=None):
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if idx is None else idx
    out = []
    for i in idx:
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        out.append((f(up.reshape(x.shape)) - f(dn.reshape(x.shape))) / (2 * h))
    return np.array(out)


def rel_err(a, f, floor=1e-8):
    a, f = np.asarray(a, float), np.asarray(f, float)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
