"""Central finite-difference gradient checker."""

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, backward


@dataclass
class GradCheckReport:
    name: str
    checked: int
    max_rel_err: float
    tol: float
    worst: str = ""
    details: list = field(default_factory=list)
    nonsmooth: list = field(default_factory=list)

    @property
    def passed(self):
        return bool(np.isfinite(self.max_rel_err) and self.max_rel_err <= self.tol)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        kinks = f", {len(self.nonsmooth)} resolved at a kink" if self.nonsmooth else ""
        return (f"{status} {self.name}: {self.checked} scalars, max rel err {self.max_rel_err:.3e} "
                f"(tol {self.tol:g}){kinks} {self.worst}")


def grad_check(module_forward, params, inputs=None, tol=1e-3, step=1e-4, n_samples=64,
               seed=0, name="module", floor=1e-6):
    """Compare analytic gradients against central differences.

    ``module_forward(graph, params, inputs)`` must build a scalar loss node.
    At least ``n_samples`` scalar parameters are perturbed (all of them when fewer exist),
    drawn round-robin over tensors so every parameter tensor is touched.
    Relative error is |a - n| / max(|a|, |n|, floor).

    Bilinear sampling is piecewise linear, so a perturbation of ``step`` can straddle a
    grid-line crossing. A scalar that misses ``tol`` is re-differenced at step/10 and
    step/100; if both agree with the analytic value it is recorded in ``nonsmooth`` and
    its refined error is used. A wrong gradient fails at every step.
    """
    def loss_value():
        g = Graph(np.float64)
        return float(module_forward(g, params, inputs).value)

    g = Graph(np.float64)
    loss = module_forward(g, params, inputs)
    grads = backward(g, loss)

    rng = np.random.default_rng(seed)
    names = [n for n in params.names() if n in grads]
    picks = []
    total = int(sum(params[n].size for n in names))
    if total <= n_samples:
        picks = [(n, i) for n in names for i in range(params[n].size)]
    else:
        per = max(1, -(-n_samples // max(len(names), 1)))
        for n in names:
            size = params[n].size
            k = min(size, per)
            picks += [(n, int(i)) for i in rng.choice(size, size=k, replace=False)]
        if len(picks) < n_samples:
            extra = rng.choice(len(names), size=n_samples - len(picks))
            picks += [(names[j], int(rng.integers(params[names[j]].size))) for j in extra]

    worst = 0.0
    worst_at = ""
    details = []
    nonsmooth = []
    for n, i in picks:
        p = params.params[n]
        flat = p.reshape(-1)
        orig = flat[i]
        ana = float(grads[n].reshape(-1)[i])

        def central(h):
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            num = (up - down) / (2 * h)
            return num, abs(ana - num) / max(abs(ana), abs(num), floor)

        num, rel = central(step)
        if not rel <= tol:
            refined = [central(step / 10), central(step / 100)]
            if all(r <= tol for _, r in refined):
                nonsmooth.append((n, i, ana, num, rel))
                num, rel = refined[-1]
        details.append((n, i, ana, num, rel))
        if rel > worst or not np.isfinite(rel):
            worst = rel
            worst_at = f"[{n}#{i} analytic={ana:.6e} numeric={num:.6e}]"
    return GradCheckReport(name, len(picks), worst, tol, worst_at, details, nonsmooth)
