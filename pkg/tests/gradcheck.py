"""Central finite differences over every parameter coordinate."""

import numpy as np

from crisismtl.training import compute_loss


def numeric_grads(params, cfg, batch, lam, h=1e-5):
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = compute_loss(params, cfg, batch, lam).total
            flat[i] = orig - h
            down = compute_loss(params, cfg, batch, lam).total
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def relative_error(analytic, numeric):
    """Per-tensor ||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if scale == 0 else float(np.linalg.norm(analytic - numeric) / scale)


def grads_agree(analytic, numeric, rtol, atol=1e-8):
    """Relative check, except tensors whose gradient vanishes (e.g. key biases) use an absolute floor."""
    if max(np.linalg.norm(analytic), np.linalg.norm(numeric)) < atol:
        return True
    return relative_error(analytic, numeric) < rtol
