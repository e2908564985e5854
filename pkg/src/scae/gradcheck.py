"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .autograd import Param, backward
from .errors import ConfigError

# Operations that have no useful derivative and must not be probed.
NON_DIFFERENTIABLE = {"quantize", "round"}


def finite_diff_check(loss_fn, params, eps=1e-5, tolerance=1e-3, atol=1e-9):
    """Compare analytic gradients of ``loss_fn`` against central differences.

    loss_fn: callable of no arguments returning a scalar Node; it must read
    the current ``.value`` of every Param in ``params`` on each call.
    Returns a report dict with per-parameter max relative error and a
    ``passed`` flag.  Non-finite values during probing are reported, never
    silently passed.

    Elements where analytic and numeric agree within ``atol`` count as
    matching regardless of relative error; near-zero gradients sit below
    the cancellation noise of central differences.
    """
    name = getattr(loss_fn, "__name__", "")
    if getattr(loss_fn, "differentiable", True) is False or name in NON_DIFFERENTIABLE:
        raise ConfigError(f"{name or 'operation'} is not differentiable; refusing to probe")

    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.value):
        return {"passed": False, "max_rel_error": np.inf, "per_param": {}, "finite": False}
    backward(loss)
    analytic = {
        p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
        for p in params
    }

    report = {}
    finite = True
    for p in params:
        base = p.value.copy()
        num = np.zeros_like(base)
        live = p.value.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(live.size):
            orig = live[i]
            step = eps * max(1.0, abs(orig))
            live[i] = orig + step
            hi = float(loss_fn().value)
            live[i] = orig - step
            lo = float(loss_fn().value)
            live[i] = orig
            nflat[i] = (hi - lo) / (2.0 * step)
            if not (np.isfinite(hi) and np.isfinite(lo)):
                finite = False
        p.value[...] = base
        a = analytic[p.name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
        err = np.abs(a - num)
        rel = np.where(err <= atol, 0.0, err / denom)
        report[p.name] = float(np.max(rel)) if a.size else 0.0

    max_err = max(report.values()) if report else 0.0
    return {
        "passed": finite and max_err <= tolerance,
        "max_rel_error": max_err,
        "per_param": report,
        "finite": finite,
    }


def check_op(op_fn, arrays, names=None, eps=1e-5, tolerance=1e-3):
    """Convenience wrapper: wrap raw arrays in Params and check ``op_fn``.

    op_fn receives the Params and must return a scalar Node.
    """
    names = names or [f"p{i}" for i in range(len(arrays))]
    params = [Param(a, n) for a, n in zip(arrays, names)]

    def loss():
        return op_fn(*params)

    loss.differentiable = getattr(op_fn, "differentiable", True)
    loss.__name__ = getattr(op_fn, "__name__", "op")
    return finite_diff_check(loss, params, eps=eps, tolerance=tolerance)
