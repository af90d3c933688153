"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import UsageError
from .core import Tensor, no_grad


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    # (parameter index, flat index, analytic, numeric, relative error)
    entries: list[tuple[int, int, float, float, float]] = field(default_factory=list)

    def worst(self):
        return max(self.entries, key=lambda e: e[4])


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor).

    The floor stops entries whose true gradient is ~0 from being judged on
    finite-difference round-off alone.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    n_samples: int = 200,
    eps: float = 1e-5,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckResult:
    """Compare backprop gradients with central differences on sampled entries.

    ``loss_fn`` must be deterministic (dropout off) and every parameter
    must be float64.
    """
    params = list(params)
    for p in params:
        if p.dtype != np.float64:
            raise UsageError("gradcheck needs float64 parameters")
    rng = rng if rng is not None else np.random.default_rng(0)

    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    result = GradCheckResult(max_rel_error=0.0, checked=0)
    with no_grad():
        for flat in np.sort(picks):
            pi = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[pi])
            view = params[pi].data.reshape(-1)
            orig = view[idx]
            view[idx] = orig + eps
            up = float(loss_fn().data)
            view[idx] = orig - eps
            down = float(loss_fn().data)
            view[idx] = orig
            numeric = (up - down) / (2 * eps)
            a = float(analytic[pi].reshape(-1)[idx])
            err = relative_error(a, numeric, floor)
            result.entries.append((pi, idx, a, numeric, err))
            result.max_rel_error = max(result.max_rel_error, err)
            result.checked += 1
    return result
