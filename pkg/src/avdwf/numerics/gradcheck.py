"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    max_abs_error: float
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max rel err {self.max_rel_error:.2e} "
                f"(abs {self.max_abs_error:.2e}, {self.n_checked} coords, tol {self.tol:g})")


def relative_error(analytic: float, numeric: float, floor: float = 1e-10) -> float:
    scale = max(abs(analytic), abs(numeric))
    if scale < floor:
        return 0.0
    return abs(analytic - numeric) / scale


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    *,
    h: float = 1e-5,
    order: int = 2,
    tol: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    name: str = "fn",
) -> GradCheckResult:
    """Compare reverse-mode gradients of ``fn`` with central differences.

    ``fn`` receives one ``Tensor`` per entry of ``inputs``.  Non-scalar outputs
    are reduced with a fixed random projection so every output entry matters.
    At most ``max_coords`` randomly chosen coordinates per input are perturbed.
    ``order=4`` switches to the five-point central stencil, whose O(h^4)
    truncation error suits functions with large higher derivatives.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = rng or np.random.default_rng(0)
    arrays = [np.array(a, dtype=np.float64) for a in inputs]

    probe = fn(*[Tensor(a) for a in arrays])
    proj = rng.standard_normal(probe.shape) if probe.size > 1 else np.ones(probe.shape)

    def scalar(values: list[np.ndarray]) -> float:
        out = fn(*[Tensor(v) for v in values])
        return float(np.sum(out.data * proj))

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*leaves)
    out.backward(proj)

    worst_rel, worst_abs, count = 0.0, 0.0, 0
    for idx, arr in enumerate(arrays):
        analytic = leaves[idx].grad
        if analytic is None:
            analytic = np.zeros_like(arr)
        flat = np.arange(arr.size)
        if max_coords is not None and arr.size > max_coords:
            flat = rng.choice(arr.size, size=max_coords, replace=False)
        for f in flat:
            pos = np.unravel_index(f, arr.shape)
            orig = arr[pos]

            def at(step):
                arr[pos] = orig + step
                return scalar(arrays)

            if order == 2:
                numeric = (at(h) - at(-h)) / (2 * h)
            else:
                numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
            arr[pos] = orig
            a = float(analytic[pos])
            worst_rel = max(worst_rel, relative_error(a, numeric))
            worst_abs = max(worst_abs, abs(a - numeric))
            count += 1
    return GradCheckResult(name, worst_rel, worst_abs, count, tol)
