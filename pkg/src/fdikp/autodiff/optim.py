"""Parameter storage, Adam, MultiStep schedule and weight averaging."""

import numpy as np


class ParamStore:
    """Named parameters in insertion order plus Adam moment accumulators."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.grads = {}
        self.m = {}
        self.v = {}
        self.t = 0

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=self.dtype)
        self.params[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __len__(self):
        return len(self.params)

    def names(self):
        return list(self.params)

    def items(self):
        return self.params.items()

    def set(self, name, value):
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != self.params[name].shape:
            raise ValueError(f"shape of {name!r} is immutable: {self.params[name].shape} vs {value.shape}")
        self.params[name] = value.copy()

    def set_grads(self, grads):
        self.grads = {k: np.asarray(v, dtype=self.dtype) for k, v in grads.items()}

    def num_scalars(self):
        return int(sum(p.size for p in self.params.values()))

    def copy(self, dtype=None):
        out = ParamStore(dtype or self.dtype)
        for k, p in self.params.items():
            out.params[k] = p.astype(out.dtype, copy=True)
            out.m[k] = self.m[k].astype(out.dtype, copy=True)
            out.v[k] = self.v[k].astype(out.dtype, copy=True)
        out.t = self.t
        return out

    def schema(self):
        return [(k, p.shape) for k, p in self.params.items()]


def adam_step(store, grads=None, lr=1e-4, beta1=0.9, beta2=0.999, eps_opt=1e-8, t=None):
    """Bias-corrected Adam update in place. ``t`` defaults to the store's step + 1."""
    grads = store.grads if grads is None else grads
    t = store.t + 1 if t is None else t
    if t < 1:
        raise ValueError("Adam step index must be >= 1")
    bc1 = 1 - beta1 ** t
    bc2 = 1 - beta2 ** t
    for name, p in store.params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}: {g.shape} vs {p.shape}")
        g = g.astype(store.dtype, copy=False)
        m = store.m[name] = beta1 * store.m[name] + (1 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1 - beta2) * g * g
        store.params[name] = (p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps_opt)).astype(store.dtype)
    store.t = t
    return store


def lr_schedule(step, lr0, milestones, gamma):
    if list(milestones) != sorted(milestones):
        raise ValueError("milestones must be ascending")
    passed = sum(1 for m in milestones if step >= m)
    return lr0 * gamma ** passed


def swa_average(checkpoints):
    """Elementwise mean of parameter stores with identical schemas; moments reset."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    ref = checkpoints[0]
    for other in checkpoints[1:]:
        if [(k, s) for k, s in other.schema()] != ref.schema():
            raise ValueError("checkpoint schemas differ")
    out = ParamStore(ref.dtype)
    for name in ref.names():
        # running mean: exact when all inputs agree, and w, -w cancel to zero
        acc = np.array(ref[name], dtype=np.float64)
        for k, ck in enumerate(checkpoints[1:], start=2):
            acc += (ck[name] - acc) / k
        out.add(name, acc)
    return out
