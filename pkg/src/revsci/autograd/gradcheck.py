"""Finite-difference and engine-parity verification of the backprop engines."""
from dataclasses import dataclass, field

import numpy as np

from ..revnet import forward
from .engines import _target, get_engine, mse_loss

REL_FLOOR = 1e-8


def relative_error(a, b, floor=REL_FLOOR):
    return abs(a - b) / max(abs(a), abs(b), floor)


@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    rows: list = field(default_factory=list)  # dicts: name, index, analytic, numeric, rel_error
    skipped_kinks: int = 0

    @property
    def checked(self):
        return len(self.rows)


def _loss_and_signs(net, ce, x_true):
    signs = []
    xhat = forward(net, ce, signs)
    return mse_loss(xhat, x_true), signs


def _same_signs(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def sample_parameters(net, count, seed=0):
    """Round-robin over parameter tensors, a random entry from each, so every tensor is visited."""
    rng = np.random.default_rng(seed)
    named = list(net.named_parameters())
    picks = []
    while len(picks) < count:
        for name, p in named:
            picks.append((name, int(rng.integers(p.size))))
            if len(picks) == count:
                break
    return picks


def finite_difference_check(net, ce, x_true, param_subset=None, step=1e-3, *, engine="reversible",
                            samples=100, seed=0, skip_kinks=True):
    """Compare engine gradients with central differences of the MSE loss.

    ``param_subset`` is a list of (name, flat_index); by default ``samples``
    entries are drawn. The network is piecewise linear in any single
    parameter, so central differences are exact up to rounding unless the
    stencil straddles a LeakyReLU kink. Such entries are detected by comparing
    activation sign patterns at both stencil points and, with
    ``skip_kinks``, replaced by further draws.
    """
    x_true = _target(net, x_true)
    report, _ = get_engine(engine)(net, ce, x_true)
    _, base_signs = _loss_and_signs(net, ce, x_true)
    params = net.parameter_dict()
    if param_subset is None:
        candidates = iter(sample_parameters(net, samples * 20, seed))
        wanted = samples
    else:
        candidates = iter(param_subset)
        wanted = len(param_subset)

    rows, skipped = [], 0
    for name, index in candidates:
        if len(rows) == wanted:
            break
        flat = params[name].reshape(-1)
        original = flat[index]
        flat[index] = original + step
        lp, sp = _loss_and_signs(net, ce, x_true)
        flat[index] = original - step
        lm, sm = _loss_and_signs(net, ce, x_true)
        flat[index] = original
        if skip_kinks and not (_same_signs(sp, base_signs) and _same_signs(sm, base_signs)):
            skipped += 1
            continue
        numeric = (lp - lm) / (2 * step)
        analytic = float(report.grads[name].reshape(-1)[index])
        rows.append({"name": name, "index": index, "analytic": analytic, "numeric": numeric,
                     "rel_error": relative_error(analytic, numeric)})
    worst = max((r["rel_error"] for r in rows), default=0.0)
    return FiniteDifferenceReport(worst, rows, skipped)


def gradient_parity(net, ce, x_true):
    """Max over parameter tensors of max|g_rev - g_naive| / max|g_naive|, plus both reports."""
    naive, mem_naive = get_engine("naive")(net, ce, x_true)
    rev, mem_rev = get_engine("reversible")(net, ce, x_true)
    worst = 0.0
    per_tensor = {}
    for name, g in naive.grads.items():
        scale = max(float(np.abs(g).max()), REL_FLOOR)
        err = float(np.abs(rev.grads[name] - g).max()) / scale
        per_tensor[name] = err
        worst = max(worst, err)
    return worst, per_tensor, (naive, mem_naive), (rev, mem_rev)
