"""Quantum and classical information matrices.

Symmetric logarithmic derivatives (SLDs) solve the Lyapunov-type equation
rho L_i + L_i rho = 2 drho_i.  The equation is converted to a real
d^2 x d^2 linear system in an orthonormal Hermitian operator basis, which
is exact and cheap at the dimensions supported here.  For pure families
rho^2 = rho makes L_i = 2 drho_i a valid solution, and that shortcut is
used instead of pseudo-inverting a singular Lyapunov map.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import IrregularModelError, RankDeficiencyError
from .linalg import hermitian_basis, hermitize
from .models import ParametricModel, Povm, born_distribution


@dataclass(frozen=True)
class InfoMatrix:
    """Real symmetric PSD information matrix with its provenance kind."""

    matrix: np.ndarray
    kind: str  # "helstrom" | "povm_fisher"
    std_error: Optional[np.ndarray] = None  # entrywise MC error, when sampled

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m = 0.5 * (m + m.T)
        object.__setattr__(self, "matrix", m)

    @property
    def num_params(self):
        return self.matrix.shape[0]


def sld(model: ParametricModel, theta, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Symmetric logarithmic derivatives lambda_i at theta.

    Raises RankDeficiencyError when rho is numerically singular and the
    family is not pure.
    """
    rho = model.state(theta)
    drho = model.derivs(theta)
    if model.is_pure:
        return [2.0 * dr for dr in drho]
    w = np.linalg.eigvalsh(rho)
    if w[0] <= numerics.rank_tol:
        raise RankDeficiencyError(
            f"state is singular (eigenvalue {w[0]:.3e} <= {numerics.rank_tol:g}); "
            "SLDs are only computed for nonsingular or pure models",
            eigenvalue=float(w[0]))
    basis = hermitian_basis(model.dim)
    n = len(basis)
    # M_ab = trace(rho {B_a, B_b}), right-hand side 2 trace(B_a drho_i)
    rb = [rho @ b for b in basis]
    m = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            val = np.trace(rb[a] @ basis[b] + rb[b] @ basis[a]).real
            m[a, b] = m[b, a] = val
    out = []
    for dr in drho:
        rhs = 2.0 * np.array([np.trace(b @ dr).real for b in basis])
        x = np.linalg.solve(m, rhs)
        lam = np.zeros_like(rho)
        for coeff, b in zip(x, basis):
            lam = lam + coeff * b
        out.append(hermitize(lam))
    return out


def sld_residual(rho, drho, lams):
    """max-entry residual of rho L + L rho - 2 drho over the collection."""
    res = 0.0
    for dr, lam in zip(drho, lams):
        res = max(res, float(np.max(np.abs(rho @ lam + lam @ rho - 2.0 * dr))))
    return res


def helstrom_matrix(model: ParametricModel, theta,
                    numerics: NumericsConfig = DEFAULT_NUMERICS) -> InfoMatrix:
    """Helstrom quantum information matrix H_ij = Re trace(rho L_i L_j)."""
    rho = model.state(theta)
    lams = sld(model, theta, numerics)
    p = len(lams)
    h = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            h[i, j] = h[j, i] = np.trace(rho @ lams[i] @ lams[j]).real
    return InfoMatrix(h, "helstrom")


def classical_fisher(probs, dprobs, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Fisher information of a finite distribution with derivative rows.

    probs: (n,) outcome probabilities; dprobs: (p, n) derivatives.
    Outcomes with p_x <= prob_floor and all |dp_x| <= prob_floor are
    skipped; a vanishing outcome with |dp_x| > fisher_grad_tol makes the
    model irregular and raises.
    """
    probs = np.asarray(probs, dtype=float)
    dprobs = np.atleast_2d(np.asarray(dprobs, dtype=float))
    p = dprobs.shape[0]
    info = np.zeros((p, p))
    for x in range(probs.size):
        px = probs[x]
        dx = dprobs[:, x]
        if px <= numerics.prob_floor:
            if np.max(np.abs(dx)) > numerics.fisher_grad_tol:
                raise IrregularModelError(
                    f"outcome {x} has probability {px:.3e} but derivative "
                    f"{np.max(np.abs(dx)):.3e}; Fisher information diverges")
            continue
        info += np.outer(dx, dx) / px
    return 0.5 * (info + info.T)


def povm_fisher(model: ParametricModel, theta, povm: Povm,
                numerics: NumericsConfig = DEFAULT_NUMERICS) -> InfoMatrix:
    """Fisher information of the Born distribution of a measurement."""
    rho = model.state(theta)
    drho = model.derivs(theta)
    probs = born_distribution(rho, povm, numerics)
    dprobs = np.array([[np.trace(dr @ e).real for e in povm.elements] for dr in drho])
    return InfoMatrix(classical_fisher(probs, dprobs, numerics), "povm_fisher")
