"""Finite-difference validation of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    worst_index: tuple
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    tol: float
    entries: List[GradCheckEntry]

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def ok(self) -> bool:
        return all(e.max_rel_error <= self.tol for e in self.entries)

    def failures(self) -> List[GradCheckEntry]:
        return [e for e in self.entries if e.max_rel_error > self.tol]


def grad_check(
    fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    exclude: Optional[Dict[str, np.ndarray]] = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients of a scalar ``fn()`` to central differences.

    Args:
        fn: closure evaluating the scalar output from the current parameter
            values (re-runs the forward pass each call).
        params: named parameters to perturb; each must have requires_grad.
        h: central-difference step.
        exclude: optional boolean masks per name; True entries are skipped
            (e.g. inputs sitting on a nondifferentiable point).

    The per-element relative error is |analytic - fd| / max(1, |analytic|).
    """
    if h <= 0:
        raise ConfigError("grad_check requires h > 0")
    for p in params.values():
        p.zero_grad()
    out = fn()
    if out.size != 1:
        raise ConfigError("grad_check expects a scalar output")
    out.backward()
    analytic = {name: p.grad_or_zero().copy() for name, p in params.items()}

    entries = []
    for name, p in params.items():
        mask = None if exclude is None else exclude.get(name)
        grad_a = analytic[name]
        worst = 0.0
        worst_index = ()
        worst_pair = (0.0, 0.0)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            idx = np.unravel_index(i, p.data.shape)
            if mask is not None and mask[idx]:
                continue
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(grad_a[idx])
            rel = abs(a - numeric) / max(1.0, abs(a))
            if rel > worst:
                worst, worst_index, worst_pair = rel, idx, (a, numeric)
        entries.append(GradCheckEntry(name, worst, worst_index, *worst_pair))
    return GradCheckReport(tol=tol, entries=entries)
