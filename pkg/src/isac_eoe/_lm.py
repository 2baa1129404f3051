"""Small dense Levenberg-Marquardt solver used by the mapping and SLAM stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    grad_norm: float
    converged: bool
    iterations: int


def levenberg_marquardt(fun, x0, *, max_iterations=100, gradient_tol=1e-9,
                        damping_init=1e-3, max_damping=1e16):
    """Minimise ``cost(x) = r(x) @ r(x)``.

    ``fun(x)`` returns ``(r, J)`` with ``J = dr/dx``, or ``None`` when ``x``
    is infeasible (the step is then rejected like an uphill one).
    Convergence means ``|grad cost| <= gradient_tol``; the gradient is
    ``2 J^T r``.
    """
    x = np.array(x0, dtype=float)
    out = fun(x)
    if out is None:
        raise ValueError("initial point is infeasible")
    r, jac = out
    cost = float(r @ r)
    lam = damping_init
    it = 0
    while True:
        g = jac.T @ r
        grad_norm = 2.0 * float(np.linalg.norm(g))
        if grad_norm <= gradient_tol:
            return LMResult(x, cost, grad_norm, True, it)
        if it >= max_iterations:
            break
        it += 1
        a = jac.T @ jac
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        improved = False
        while lam <= max_damping:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            out = fun(x_new)
            if out is not None:
                r_new, jac_new = out
                cost_new = float(r_new @ r_new)
                # near the optimum the decrease drops below round-off; a
                # smaller gradient at equal cost still counts as progress
                flat = (cost_new <= cost * (1.0 + 1e-12)
                        and np.linalg.norm(jac_new.T @ r_new) < np.linalg.norm(g))
                if cost_new < cost or flat:
                    x, r, jac, cost = x_new, r_new, jac_new, cost_new
                    lam = max(lam / 10.0, 1e-12)
                    improved = True
                    break
            lam *= 10.0
        if not improved:
            # no descent possible at working precision
            break
    g = jac.T @ r
    grad_norm = 2.0 * float(np.linalg.norm(g))
    return LMResult(x, cost, grad_norm, grad_norm <= gradient_tol, it)
