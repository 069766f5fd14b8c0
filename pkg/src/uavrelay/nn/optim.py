import numpy as np

from ..validation import check_fraction


class Adam:
    """Bias-corrected adaptive-moment optimizer updating parameters in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter / gradient lists do not match optimizer state")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != self.m[i].shape or g.shape != p.shape:
                raise ValueError(f"parameter {i}: shape mismatch {p.shape} / {g.shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {i}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def soft_update(target_params, online_params, tau):
    """In place ``target <- tau * online + (1 - tau) * target``; returns ``target_params``."""
    tau = check_fraction(tau, "tau")
    if len(target_params) != len(online_params):
        raise ValueError("target and online parameter lists differ in length")
    for i, (t, o) in enumerate(zip(target_params, online_params)):
        if t.shape != o.shape:
            raise ValueError(f"parameter {i}: shape mismatch {t.shape} vs {o.shape}")
    for t, o in zip(target_params, online_params):
        if tau == 1.0:
            t[...] = o
        elif tau != 0.0:
            t *= 1.0 - tau
            t += tau * o
    return target_params
