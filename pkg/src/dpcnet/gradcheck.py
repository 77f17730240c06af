"""Central finite-difference verification of analytic gradients.

Used both by the test suite and the `gradcheck` CLI subcommand.  Run the
checks in 64-bit mode: callers build their tensors/models with
dtype=float64 so the h=1e-4 stencil has headroom over roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .tensor import Tensor

# Test-only sabotage hook: name of an op whose analytic gradient should be
# deliberately corrupted, so failure detection itself can be exercised.
SABOTAGE_OP: Optional[str] = None


@dataclass
class GradCheckReport:
    op: str
    max_rel_error: float
    checked_coords: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (
            f"{self.op:32s} max_rel_err={self.max_rel_error:.3e} "
            f"(coords={self.checked_coords}, tol={self.tol:.1e}) {status}"
        )


def _central(eval_loss: Callable[[], float], flat: np.ndarray, i: int, h: float) -> float:
    orig = flat[i]
    flat[i] = orig + h
    fp = eval_loss()
    flat[i] = orig - h
    fm = eval_loss()
    flat[i] = orig
    return (fp - fm) / (2 * h)


def _rel_error(eval_loss: Callable[[], float], flat: np.ndarray, i: int,
               a: float, h: float) -> float:
    """Relative error of the central stencil vs the analytic value `a`.

    A coordinate can land within h of a piecewise-linear kink (ReLU, |.|),
    where the stencil averages the two one-sided slopes and converges to
    neither.  Shrinking h moves the stencil off the kink, so a failing
    coordinate is retried at h/16 and h/256; a genuinely wrong analytic
    gradient keeps failing at every step size.
    """
    best = np.inf
    for step in (h, h / 16, h / 256):
        numeric = _central(eval_loss, flat, i, step)
        best = min(best, abs(a - numeric) / max(abs(a), abs(numeric), 1e-6))
        if best < 1e-5:
            break
    return best


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-4,
    tol: float = 1e-4,
    op_name: str = "op",
    max_coords: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare analytic grad(f)(x) with the central two-point stencil.

    Samples up to `max_coords` coordinates of x (all of them when the
    tensor is small).  Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
    finite-difference noise on zero-gradient coordinates from registering.
    """
    x = Tensor(x.data.astype(np.float64), requires_grad=True)
    out = f(x)
    if out.size != 1:
        raise ValueError(f"{op_name}: gradcheck target must be scalar")
    x.zero_grad()
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    if SABOTAGE_OP == op_name:
        analytic = analytic + 0.5 * (np.abs(analytic) + 1.0)

    flat = x.data.reshape(-1)
    n = flat.size
    if n <= max_coords:
        coords = np.arange(n)
    else:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(n, size=max_coords, replace=False)

    max_rel = 0.0
    aflat = analytic.reshape(-1)
    eval_loss = lambda: f(Tensor(x.data)).item()
    for i in coords:
        max_rel = max(max_rel, _rel_error(eval_loss, flat, i, aflat[i], h))

    return GradCheckReport(op=op_name, max_rel_error=max_rel, checked_coords=len(coords), tol=tol)


def check_parameters(
    loss_fn: Callable[[], Tensor],
    named_params: list[tuple[str, Tensor]],
    h: float = 1e-4,
    tol: float = 1e-4,
    coords_per_param: int = 4,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, float]:
    """Finite-difference check of a scalar loss w.r.t. model parameters.

    The loss closure must rebuild the forward pass on every call (it reads
    the current parameter values).  Returns max relative error per
    parameter name.
    """
    rng = rng or np.random.default_rng(0)
    for _, p in named_params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in named_params}

    errors: dict[str, float] = {}
    for name, p in named_params:
        flat = p.data.reshape(-1)
        k = min(coords_per_param, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        aflat = analytic[name].reshape(-1)
        eval_loss = lambda: loss_fn().item()
        worst = 0.0
        for i in coords:
            worst = max(worst, _rel_error(eval_loss, flat, i, aflat[i], h))
        errors[name] = worst
    return errors
