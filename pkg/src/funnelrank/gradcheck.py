"""Finite-difference verification of reverse-mode gradients.

The checker perturbs every scalar parameter by +-step, re-runs the forward
closure, and compares the central difference against the taped gradient
using rel_err = |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward


@dataclass(frozen=True)
class GradCheckEntry:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    tolerance: float
    entries: list[GradCheckEntry] = field(repr=False, default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def offenders(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if e.rel_err >= self.tolerance]


def grad_check(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               tolerance: float = 1e-4, step: float = 1e-5,
               analytic: Mapping[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare taped gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must rebuild the graph from the live ``params`` tensors on
    every call and return a scalar. Passing ``analytic`` overrides the taped
    gradients, which lets callers audit an externally computed gradient
    (or deliberately corrupt one to confirm the checker catches it).
    """
    if analytic is None:
        for p in params.values():
            p.zero_grad()
        loss = loss_fn()
        backward(loss)
        analytic = {name: p.grad.copy() for name, p in params.items()}

    entries = []
    for name, p in params.items():
        g_ad = np.asarray(analytic[name])
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            f_plus = loss_fn().item()
            flat[i] = keep - step
            f_minus = loss_fn().item()
            flat[i] = keep
            g_fd = (f_plus - f_minus) / (2.0 * step)
            g_an = float(g_ad.reshape(-1)[i])
            rel = abs(g_an - g_fd) / max(1.0, abs(g_an), abs(g_fd))
            entries.append(GradCheckEntry(
                name=name,
                index=np.unravel_index(i, p.data.shape),
                analytic=g_an, numeric=g_fd, rel_err=rel))

    entries.sort(key=lambda e: e.rel_err, reverse=True)
    worst = entries[0] if entries else None
    return GradCheckReport(
        max_rel_err=worst.rel_err if worst else 0.0,
        worst_param=worst.name if worst else "",
        tolerance=tolerance,
        entries=entries)
