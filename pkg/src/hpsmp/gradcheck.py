"""Central-difference verification of graph gradients."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .autodiff import Graph, Tensor, backward, no_grad

# Relative errors divide by max(|analytic|, |numeric|, REL_FLOOR) so that
# coordinates whose true derivative is ~0 are judged on absolute error.
REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tol: float
    per_input: List[float] = field(default_factory=list)
    checked: int = 0
    message: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} max_rel_err={self.max_rel_error:.3e} tol={self.tol:g} coords={self.checked}"
        return f"{text} ({self.message})" if self.message else text


def _eval(f, inputs) -> float:
    with no_grad():
        out = f(*inputs)
    return float(np.asarray(out.data).reshape(-1)[0])


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tol: float = 1e-4,
    step: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backward() gradients of scalar ``f(*inputs)`` to central differences.

    Args:
        f: function of the input tensors returning a scalar tensor.
        inputs: tensors to differentiate with respect to.  Their data is
            perturbed in place and restored afterwards.
        tol: pass threshold on the maximum relative error.
        step: finite-difference step.
        max_coords: if given, check at most this many randomly chosen
            coordinates per input tensor.
        seed: selects the coordinate sample.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    if tol <= 0:
        raise ValueError("tol must be positive")
    saved_flags = [t.requires_grad for t in inputs]
    saved_grads = [t.grad for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    try:
        with Graph() as g:
            out = f(*inputs)
        if out.size != 1:
            return GradCheckReport(False, float("inf"), tol, message=f"non-scalar output {out.shape}")
        if not np.all(np.isfinite(out.data)):
            return GradCheckReport(False, float("inf"), tol, message="non-finite forward value")
        backward(g, out)
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
        if not all(np.all(np.isfinite(a)) for a in analytic):
            return GradCheckReport(False, float("inf"), tol, message="non-finite analytic gradient")

        rng = np.random.default_rng(seed)
        per_input = []
        checked = 0
        for t, a in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            worst = 0.0
            for c in coords:
                orig = flat[c]
                flat[c] = orig + step
                fp = _eval(f, inputs)
                flat[c] = orig - step
                fm = _eval(f, inputs)
                flat[c] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    return GradCheckReport(
                        False, float("inf"), tol, per_input, checked,
                        message=f"non-finite value while perturbing coordinate {c}",
                    )
                numeric = (fp - fm) / (2.0 * step)
                an = a.reshape(-1)[c]
                denom = max(abs(an), abs(numeric), REL_FLOOR)
                worst = max(worst, abs(an - numeric) / denom)
                checked += 1
            per_input.append(worst)
        max_err = max(per_input, default=0.0)
        return GradCheckReport(max_err < tol, max_err, tol, per_input, checked)
    finally:
        for t, flag, grad in zip(inputs, saved_flags, saved_grads):
            t.requires_grad = flag
            t.grad = grad
