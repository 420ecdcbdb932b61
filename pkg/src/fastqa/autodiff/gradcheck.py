"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Graph, Tensor, backward, no_grad


class GradCheckError(RuntimeError):
    """A non-finite value appeared while building the checked graph."""


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)
    tol: float = 1e-5
    checked: dict = field(default_factory=dict)

    @property
    def failed(self) -> list:
        return [k for k, v in self.errors.items() if v > self.tol]

    @property
    def passed(self) -> bool:
        return not self.failed

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def summary(self) -> str:
        lines = []
        for name, err in self.errors.items():
            flag = "FAIL" if err > self.tol else "ok"
            lines.append(f"{flag:4s} {name:32s} max_rel_err={err:.3e} coords={self.checked[name]}")
        return "\n".join(lines)


def _check_finite(out: Tensor):
    graph = Graph.from_output(out)
    for node, t in zip(graph.nodes, graph.outputs):
        if not np.all(np.isfinite(t.data)):
            raise GradCheckError(f"non-finite output at node {node.id} ({node.op})")
    if not np.all(np.isfinite(out.data)):
        raise GradCheckError("non-finite loss")


def grad_check(
    f: Callable[[], Tensor],
    leaves: Mapping[str, Tensor] | Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` against central differences.

    The per-leaf error is max |a - n| / max(1, |a| + |n|).  With
    ``max_coords`` set, that many coordinates per leaf are sampled uniformly
    without replacement instead of checking every entry.
    """
    if not isinstance(leaves, Mapping):
        leaves = {(t.name or f"leaf{i}"): t for i, t in enumerate(leaves)}
    for name, t in leaves.items():
        if t.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 leaves; {name} is {t.dtype}")

    for t in leaves.values():
        t.grad = None
    loss = f()
    _check_finite(loss)
    backward(loss)
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy()
                for k, t in leaves.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for name, t in leaves.items():
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a = analytic[name].reshape(-1)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            with no_grad():
                fp = float(f().data)
                flat[c] = orig - eps
                fm = float(f().data)
            flat[c] = orig
            num = (fp - fm) / (2 * eps)
            err = abs(a[c] - num) / max(1.0, abs(a[c]) + abs(num))
            worst = max(worst, err)
        report.errors[name] = worst
        report.checked[name] = len(coords)
    return report
