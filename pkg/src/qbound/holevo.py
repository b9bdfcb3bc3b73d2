"""Holevo bound solver, dual bounds and the full-model embedding.

The bound for weight G at a model point is

    C_G = inf over feasible X of  trace Re(G^1/2 Z(X) G^1/2)
                                  + trace abs Im(G^1/2 Z(X) G^1/2),

where Z(X)_ij = trace(rho X_i X_j) and the X_j are Hermitian matrices with
trace(drho_i X_j) = delta_ij.  Without loss of generality the X_j are
restricted to trace(rho X_j) = 0 (centering any feasible X reduces Z in the
PSD order, and the objective is monotone in that order).

Solver design:

- the affine constraints are solved once; the optimization runs in
  unconstrained null-space coordinates, so every iterate is exactly feasible;
- initialization X_j = sum_k (H^-1)_jk L_k from the SLDs, which is feasible
  and optimal in quasi-classical cases, plus seeded random multistarts;
- the nonsmooth trace-abs term is smoothed, trace|A| -> trace sqrt(A^2+eps),
  with eps continuation 1e-2 -> 1e-10; each stage is minimized by gradient
  descent with Armijo backtracking.  Gradients are analytic by default
  (closed form below); forward finite differences are available as
  ``grad_mode="fd"`` and kept as a cross-check in the tests.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import NonConvergenceError, NumericalError, RankDeficiencyError
from .information import helstrom_matrix, sld
from .linalg import (hermitian_basis, hermitize, min_eigenvalue,
                     sym_sqrt_and_inv_sqrt, traceless_hermitian_basis)
from .models import ParametricModel, check_density_matrix

DEFAULT_EPS_SCHEDULE = tuple(10.0 ** (-k) for k in range(2, 11))


# ---------------------------------------------------------------------------
# problem data and options

@dataclass(frozen=True)
class HolevoProblem:
    """Model-point data (rho, drho) together with the weight matrix G."""

    rho: np.ndarray
    drho: tuple
    weight: np.ndarray

    def __post_init__(self):
        rho = check_density_matrix(self.rho)
        drho = tuple(np.asarray(d, dtype=complex) for d in self.drho)
        numerics = DEFAULT_NUMERICS
        for i, dr in enumerate(drho):
            if abs(np.trace(dr)) > numerics.deriv_trace_tol:
                raise ValueError(f"drho[{i}] is not traceless")
        g = np.asarray(self.weight, dtype=float)
        if np.max(np.abs(g - g.T)) > 1e-9:
            raise ValueError("weight matrix must be symmetric")
        g = 0.5 * (g + g.T)
        if np.linalg.eigvalsh(g)[0] <= numerics.weight_eig_floor:
            raise ValueError("weight matrix must be positive-definite")
        if g.shape[0] != len(drho):
            raise ValueError("weight dimension != number of parameters")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "drho", drho)
        object.__setattr__(self, "weight", g)

    @property
    def num_params(self):
        return len(self.drho)


@dataclass
class SolverOptions:
    """Options for :func:`solve_holevo`; serializable via ``to_dict``."""

    seed: int = 0
    max_iters: int = 600              # per smoothing stage
    multistart: int = 2               # SLD start + (multistart-1) perturbations
    eps_schedule: Sequence[float] = DEFAULT_EPS_SCHEDULE
    stage_rtol: float = 1e-9          # relative change over 5 iters ends a stage
    perturb_scale: float = 0.3
    grad_mode: str = "analytic"       # "analytic" | "fd"
    fd_step: float = 1e-7
    x_warm: Optional[Sequence[np.ndarray]] = None  # warm-start X collection

    def to_dict(self):
        return {"seed": self.seed, "max_iters": self.max_iters,
                "multistart": self.multistart,
                "eps_schedule": list(self.eps_schedule),
                "stage_rtol": self.stage_rtol,
                "perturb_scale": self.perturb_scale,
                "grad_mode": self.grad_mode, "fd_step": self.fd_step}

    @classmethod
    def from_dict(cls, obj):
        allowed = {"seed", "max_iters", "multistart", "eps_schedule",
                   "stage_rtol", "perturb_scale", "grad_mode", "fd_step"}
        unknown = set(obj) - allowed
        if unknown:
            raise ValueError(f"unknown solver option keys: {sorted(unknown)}")
        obj = dict(obj)
        if "eps_schedule" in obj:
            obj["eps_schedule"] = tuple(obj["eps_schedule"])
        opts = cls(**obj)
        if opts.grad_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown grad_mode {opts.grad_mode!r}")
        return opts


@dataclass(frozen=True)
class HolevoSolution:
    """Optimizer record: value C_G, X*, Z(X*), the unique minimizer V0."""

    value: float
    x_star: tuple
    z_star: np.ndarray
    v0: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# objective building blocks

def z_matrix(rho, xs):
    """Z(X)_ij = trace(rho X_i X_j); Hermitian and PSD up to rounding."""
    rho = np.asarray(rho, dtype=complex)
    xs = np.asarray(xs, dtype=complex)
    if xs.ndim == 2:
        xs = xs[None, :, :]
    if xs.shape[1] != rho.shape[0]:
        raise ValueError("X dimension != state dimension")
    return np.einsum("ab,ibc,jca->ij", rho, xs, xs)


def holevo_objective(g, z):
    """trace Re(G^1/2 Z G^1/2) + trace abs Im(G^1/2 Z G^1/2)."""
    gh, _ = sym_sqrt_and_inv_sqrt(g)
    m = gh @ np.asarray(z, dtype=complex) @ gh
    w = np.linalg.eigvalsh(1j * m.imag)
    return float(np.trace(m).real + np.sum(np.abs(w)))


def recover_v0(g, z):
    """The unique real symmetric minimizer V0 of trace(GV) over V >= Z.

    V0 = G^{-1/2}(Re(G^{1/2} Z G^{1/2}) + abs Im(G^{1/2} Z G^{1/2}))G^{-1/2};
    trace(G V0) equals the objective value at Z.
    """
    gh, ghinv = sym_sqrt_and_inv_sqrt(g)
    m = gh @ np.asarray(z, dtype=complex) @ gh
    s = 1j * m.imag
    w, v = np.linalg.eigh(s)
    abs_im = ((v * np.abs(w)) @ v.conj().T).real
    v0 = ghinv @ (m.real + abs_im) @ ghinv
    return 0.5 * (v0 + v0.T)


def constraint_residual(drho, xs):
    """max |trace(drho_i X_j) - delta_ij| over all i, j."""
    res = 0.0
    for i, dr in enumerate(drho):
        for j, x in enumerate(xs):
            res = max(res, abs(np.trace(dr @ x) - (1.0 if i == j else 0.0)))
    return float(res)


def check_x_collection(rho, drho, xs, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Validate a candidate X collection (feasibility and rho-centering)."""
    res = constraint_residual(drho, xs)
    if res > numerics.constraint_tol:
        raise ValueError(f"constraint residual {res:.3e} exceeds tolerance")
    centering = max(abs(np.trace(rho @ x)) for x in xs)
    if centering > numerics.constraint_tol:
        raise ValueError(f"X collection not rho-centered (|trace(rho X)| = {centering:.3e})")
    return res


# ---------------------------------------------------------------------------
# feasible set in null-space coordinates

class _FeasibleSet:
    """Affine feasible set {X_j} in an orthonormal Hermitian operator basis.

    Each X_j = P_j + sum_a t[j, a] N_a where the N_a span the common null
    space of the constraints trace(drho_i X) = 0 and trace(rho X) = 0.
    """

    def __init__(self, rho, drho):
        d = rho.shape[0]
        p = len(drho)
        self.basis = hermitian_basis(d)
        rows = [np.array([np.trace(b @ dr).real for b in self.basis]) for dr in drho]
        rows.append(np.array([np.trace(b @ rho).real for b in self.basis]))
        self.amat = np.vstack(rows)                      # (p+1, d^2)
        u, s, vt = np.linalg.svd(self.amat)
        rank = int(np.sum(s > 1e-12 * s[0]))
        if rank < p + 1:
            raise NumericalError("constraint matrix is rank deficient; "
                                 "model derivatives are linearly dependent")
        self.null = vt[rank:].T                          # (d^2, m), orthonormal
        self.m = self.null.shape[1]
        pinv = np.linalg.pinv(self.amat)
        rhs = np.vstack([np.eye(p), np.zeros((1, p))])   # centering row -> 0
        self.part_coords = (pinv @ rhs).T                # (p, d^2)
        stack = np.stack(self.basis)                     # (d^2, d, d)
        self.pmats = np.einsum("ja,acd->jcd", self.part_coords, stack)
        if self.m:
            self.nmats = np.einsum("am,acd->mcd", self.null, stack)
        else:
            self.nmats = np.zeros((0, d, d), dtype=complex)
        self.rho = rho
        self.rho_n = np.einsum("ab,mbc->mac", rho, self.nmats)
        self.p = p

    def x_mats(self, t):
        t = t.reshape(self.p, self.m)
        if self.m == 0:
            return self.pmats.copy()
        return self.pmats + np.einsum("jm,mcd->jcd", t, self.nmats)

    def coords(self, xs):
        """Null-space coordinates of a feasible X collection."""
        stack = np.stack(self.basis)
        out = np.empty((self.p, self.m))
        for j, x in enumerate(xs):
            v = np.einsum("acd,dc->a", stack, x).real
            out[j] = self.null.T @ (v - self.part_coords[j])
        return out.ravel()


class _SmoothedObjective:
    def __init__(self, fs: _FeasibleSet, g):
        self.fs = fs
        self.g = g
        self.gh, _ = sym_sqrt_and_inv_sqrt(g)

    def z_of(self, t):
        xs = self.fs.x_mats(t)
        return np.einsum("ab,ibc,jca->ij", self.fs.rho, xs, xs), xs

    def value(self, t, eps):
        z, _ = self.z_of(t)
        m = self.gh @ z @ self.gh
        w = np.linalg.eigvalsh(1j * m.imag)
        return float(np.trace(m).real + np.sum(np.sqrt(w * w + eps)))

    def value_exact(self, t):
        z, _ = self.z_of(t)
        return holevo_objective(self.g, z)

    def value_and_grad(self, t, eps):
        z, xs = self.z_of(t)
        m = self.gh @ z @ self.gh
        ah = 1j * m.imag
        w, v = np.linalg.eigh(ah)
        val = float(np.trace(m).real + np.sum(np.sqrt(w * w + eps)))
        if self.fs.m == 0:
            return val, np.zeros(0)
        # d trace sqrt(A^2+eps) = trace((A^2+eps)^{-1/2} A dA) with A = i Im M
        q = (v * (w / np.sqrt(w * w + eps))) @ v.conj().T
        tmat = self.gh @ q @ self.gh
        alpha = np.einsum("mac,kca->mk", self.fs.rho_n, xs)   # trace(rho N_a X_k)
        grad = 2.0 * (self.g @ alpha.real.T + tmat.imag @ alpha.imag.T)
        return val, grad.ravel()

    def fd_grad(self, t, eps, step):
        f0 = self.value(t, eps)
        grad = np.zeros_like(t)
        for i in range(t.size):
            tp = t.copy()
            h = step * max(1.0, abs(t[i]))
            tp[i] += h
            grad[i] = (self.value(tp, eps) - f0) / h
        return f0, grad


def _minimize_stage(obj: _SmoothedObjective, t, eps, opts: SolverOptions):
    """Armijo-backtracking gradient descent on the eps-smoothed objective."""
    if opts.grad_mode == "fd":
        fg = lambda x: obj.fd_grad(x, eps, opts.fd_step)
    else:
        fg = lambda x: obj.value_and_grad(x, eps)
    f, g = fg(t)
    step = 1.0
    history = [f]
    iters = 0
    for iters in range(1, opts.max_iters + 1):
        gnorm2 = float(g @ g)
        if gnorm2 < 1e-26:
            return t, f, iters, True
        accepted = False
        while step > 1e-18:
            t_new = t - step * g
            f_new = obj.value(t_new, eps)
            if f_new <= f - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return t, f, iters, True   # no descent possible at machine scale
        t = t_new
        f, g = fg(t)
        step = min(step * 1.6, 1e6)
        history.append(f)
        if len(history) > 5:
            prev = history[-6]
            if abs(prev - f) <= opts.stage_rtol * max(1.0, abs(f)):
                return t, f, iters, True
    return t, f, iters, False


def _sld_init(model, theta, fs: _FeasibleSet, h):
    lams = sld(model, theta)
    hinv = np.linalg.inv(h)
    xs = []
    for j in range(fs.p):
        x = np.zeros_like(fs.rho)
        for k, lam in enumerate(lams):
            x = x + hinv[j, k] * lam
        xs.append(hermitize(x))
    return xs


def solve_holevo(model: ParametricModel, theta, g, opts: Optional[SolverOptions] = None,
                 numerics: NumericsConfig = DEFAULT_NUMERICS) -> HolevoSolution:
    """Compute the Holevo bound C_G(theta) and its minimizer V0.

    Raises RankDeficiencyError when the Helstrom matrix is singular (the
    constraints are then infeasible) and NonConvergenceError, carrying the
    best value found, when the continuation fails to converge.
    """
    opts = opts or SolverOptions()
    rho = model.state(theta)
    drho = model.derivs(theta)
    g = np.asarray(g, dtype=float)
    problem = HolevoProblem(rho, drho, g)

    hmat = helstrom_matrix(model, theta, numerics).matrix
    h_eigs = np.linalg.eigvalsh(hmat)
    if h_eigs[0] <= numerics.weight_eig_floor:
        raise RankDeficiencyError(
            f"Helstrom matrix is singular (eigenvalue {h_eigs[0]:.3e}); "
            "the constraint set is infeasible", eigenvalue=float(h_eigs[0]))

    fs = _FeasibleSet(problem.rho, problem.drho)
    obj = _SmoothedObjective(fs, problem.weight)

    if opts.x_warm is not None:
        starts = [fs.coords(opts.x_warm)]
    else:
        t0 = fs.coords(_sld_init(model, theta, fs, hmat))
        starts = [t0]
        rng = np.random.default_rng(opts.seed)
        scale = opts.perturb_scale * (1.0 + float(np.linalg.norm(t0)) / max(1.0, np.sqrt(t0.size or 1)))
        for _ in range(max(0, opts.multistart - 1)):
            starts.append(t0 + scale * rng.standard_normal(t0.size))

    best = None
    runs = []
    total_iters = 0
    for t_start in starts:
        t = t_start.copy()
        converged = True
        if fs.m > 0:
            for eps in opts.eps_schedule:
                t, _, iters, ok = _minimize_stage(obj, t, eps, opts)
                total_iters += iters
                converged = converged and ok
        f_exact = obj.value_exact(t)
        f_start = obj.value_exact(t_start)
        if f_start < f_exact:     # descent on the smoothed surrogate only
            t, f_exact = t_start.copy(), f_start
        runs.append((f_exact, t, converged))
        if best is None or f_exact < best[0]:
            best = (f_exact, t, converged)

    value, t_best, converged = best
    xs = tuple(hermitize(x) for x in fs.x_mats(t_best))
    zs = z_matrix(problem.rho, np.stack(xs))
    value = holevo_objective(problem.weight, zs)
    v0 = recover_v0(problem.weight, zs)

    eps_final = opts.eps_schedule[-1] if fs.m else 0.0
    gap = obj.value(t_best, eps_final) - value if fs.m else 0.0
    v0_spread = 0.0
    if len(runs) > 1:
        v0s = [recover_v0(problem.weight, z_matrix(problem.rho, np.stack(
            [hermitize(x) for x in fs.x_mats(t)]))) for _, t, _ in runs]
        vals = [r[0] for r in runs]
        vmin = min(vals)
        near = [v for v, val in zip(v0s, vals) if val <= vmin + 1e-6 * max(1.0, abs(vmin))]
        for a in range(len(near)):
            for b in range(a + 1, len(near)):
                v0_spread = max(v0_spread, float(np.max(np.abs(near[a] - near[b]))))

    diagnostics = {
        "iterations": total_iters,
        "final_eps": eps_final,
        "constraint_residual": constraint_residual(problem.drho, xs),
        "gap_estimate": float(max(gap, 0.0)) + len(drho) * math.sqrt(eps_final or 0.0),
        "null_dim": fs.m * fs.p,
        "starts": len(starts),
        "v0_spread": v0_spread,
        "converged": converged,
        "helstrom_value": float(np.trace(g @ np.linalg.inv(hmat)).real),
    }

    solution = HolevoSolution(value=value, x_star=xs, z_star=zs, v0=v0,
                              diagnostics=diagnostics)
    _validate_solution(problem, solution, numerics)
    if not converged:
        raise NonConvergenceError(
            f"continuation did not converge within {opts.max_iters} iterations/stage",
            best_value=value, diagnostics=diagnostics)
    return solution


def _validate_solution(problem, sol: HolevoSolution, numerics: NumericsConfig):
    if min_eigenvalue(sol.v0 - sol.z_star) < -1e-7:
        raise NumericalError("V0 - Z(X*) is not PSD within tolerance")
    tv = float(np.trace(problem.weight @ sol.v0).real)
    if abs(tv - sol.value) > 1e-7 * max(1.0, abs(sol.value)):
        raise NumericalError("trace(G V0) does not reproduce the bound value")
    if sol.value < sol.diagnostics["helstrom_value"] - 1e-6:
        raise NumericalError("bound value fell below the Helstrom floor")


def quarter_helstrom_weight(model: ParametricModel, theta):
    """G = H(theta)/4, the weight matching fidelity loss."""
    return 0.25 * helstrom_matrix(model, theta).matrix


# ---------------------------------------------------------------------------
# dual bounds

def dual_bound(solution: HolevoSolution, g,
               numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Dual weight K0 = V0 G V0 with trace(K0 I_M) <= C^{K0} = C_G.

    Requires a nonsingular V0 (singular weights are out of scope).
    """
    v0 = solution.v0
    if np.linalg.eigvalsh(v0)[0] <= numerics.weight_eig_floor:
        raise NumericalError("V0 is singular; dual construction unsupported")
    g = np.asarray(g, dtype=float)
    k0 = v0 @ g @ v0
    return 0.5 * (k0 + k0.T), solution.value


def check_dual(k, info, c_k, slack_tol=DEFAULT_NUMERICS.dual_slack_tol):
    """Evaluate trace(K I) <= C^K; returns (holds, slack = C^K - trace(K I))."""
    imat = info.matrix if hasattr(info, "matrix") else np.asarray(info, dtype=float)
    slack = float(c_k - np.trace(np.asarray(k, dtype=float) @ imat))
    return slack >= -slack_tol, slack


# ---------------------------------------------------------------------------
# full-model embedding (convexity machinery)

def full_model_collection(rho, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Unique Y collection of the completely-unknown-state model at rho.

    Coordinates are Bloch-normalized: the derivative along coordinate i is
    T_i/sqrt(2) with T_i the orthonormal traceless Hermitian basis (for
    d = 2 these are the sigma_i/2).  Returns (ys, z_full).
    """
    rho = check_density_matrix(rho)
    w = np.linalg.eigvalsh(rho)
    if w[0] <= numerics.rank_tol:
        raise RankDeficiencyError(
            f"full model needs a nonsingular state (eigenvalue {w[0]:.3e})",
            eigenvalue=float(w[0]))
    d = rho.shape[0]
    tbasis = traceless_hermitian_basis(d)
    derivs = [t / np.sqrt(2.0) for t in tbasis]
    basis = hermitian_basis(d)
    rows = [np.array([np.trace(b @ dr).real for b in basis]) for dr in derivs]
    rows.append(np.array([np.trace(b @ rho).real for b in basis]))
    amat = np.vstack(rows)
    q = len(derivs)
    rhs = np.vstack([np.eye(q), np.zeros((1, q))])
    coords = np.linalg.solve(amat, rhs)
    stack = np.stack(basis)
    ys = [np.einsum("a,acd->cd", coords[:, j], stack) for j in range(q)]
    return ys, z_matrix(rho, np.stack(ys))


def full_model_z(rho, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Z(Y) of the completely-unknown-state model at rho."""
    return full_model_collection(rho, numerics)[1]


@dataclass(frozen=True)
class EmbeddingStep:
    eps: float
    delta: float
    margin: float   # min eigenvalue of W_eps - Z_full (must be > 0)
    gap: float      # |(W_eps^{-1})_11 - V^{-1}| in max-entry norm


def embedding_sequence(solution: HolevoSolution, model: ParametricModel, theta,
                       eps_schedule=(1e-1, 1e-2, 1e-3), delta_max=1e3,
                       numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Embed a submodel solution into the full-model picture.

    Augments X* with a basis of its rho-orthocomplement, solves for the
    unique full-model collection Y (whose leading block is X*), and for
    each eps constructs W_eps = D_eps^{-1}(diag(V,0) + delta 1)D_eps^{-1}
    with delta(eps) = 1.01 * max(0, lambda_max(D_eps Z_full D_eps - diag(V,0))).
    Each step verifies W_eps > Z_full and reports the 11-block inversion gap.
    """
    rho = model.state(theta)
    w = np.linalg.eigvalsh(rho)
    if w[0] <= numerics.rank_tol:
        raise RankDeficiencyError("embedding requires a nonsingular state",
                                  eigenvalue=float(w[0]))
    drho = model.derivs(theta)
    v = np.asarray(solution.v0, dtype=float)
    xs = list(solution.x_star)
    p = len(xs)
    d = rho.shape[0]
    q = d * d - 1

    basis = hermitian_basis(d)
    stack = np.stack(basis)
    rvec = np.array([np.trace(b @ rho).real for b in basis])
    # euclidean-orthonormal basis of {A : trace(rho A) = 0}
    _, _, vt = np.linalg.svd(rvec[None, :])
    lcols = vt[1:].T                                        # (d^2, q)
    lmats = np.einsum("am,acd->mcd", lcols, stack)
    gram = np.einsum("ab,mbc,nca->mn", rho, lmats, lmats).real
    gram = 0.5 * (gram + gram.T)
    xcoords = np.array([[np.trace(b @ x).real for b in basis] for x in xs]) @ lcols
    # nu basis: orthocomplement of span{X*} under <A,B> = Re trace(rho A B)
    _, s, vt = np.linalg.svd(xcoords @ gram)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
    ncols = vt[rank:].T                                     # (q, q - p)
    nmats = np.einsum("qm,qcd->mcd", ncols, lmats)

    rows = [np.array([np.trace(b @ dr).real for b in basis]) for dr in drho]
    for nu in nmats:
        smat = hermitize(rho @ nu + nu @ rho) * 0.5
        rows.append(np.array([np.trace(b @ smat).real for b in basis]))
    rows.append(rvec)
    amat = np.vstack(rows)                                  # (d^2, d^2)
    rhs = np.vstack([np.eye(q), np.zeros((1, q))])
    coords = np.linalg.solve(amat, rhs)
    ys = [np.einsum("a,acd->cd", coords[:, j], stack) for j in range(q)]
    lead_err = max(float(np.max(np.abs(ys[j] - xs[j]))) for j in range(p))
    if lead_err > 1e3 * numerics.constraint_tol:
        raise NumericalError(
            f"leading block of the full collection differs from X* by {lead_err:.3e}")
    z_full = z_matrix(rho, np.stack(ys))

    v_ext = np.zeros((q, q))
    v_ext[:p, :p] = v
    v_inv = np.linalg.inv(v)
    steps = []
    for eps in eps_schedule:
        dvec = np.concatenate([np.ones(p), np.full(q - p, eps)])
        m_eps = z_full * np.outer(dvec, dvec)
        viol = float(np.linalg.eigvalsh(hermitize(m_eps - v_ext))[-1])
        delta = 1.01 * max(viol, 0.0) + 1e-12
        if delta > delta_max:
            raise NumericalError(
                f"no delta < {delta_max} makes W > Z_full at eps={eps} "
                f"(violating eigenvalue {viol:.3e})")
        w_eps = (v_ext + delta * np.eye(q)) / np.outer(dvec, dvec)
        margin = min_eigenvalue(w_eps - z_full)
        if margin <= 0.0:
            raise NumericalError(
                f"W - Z_full not positive definite at eps={eps} (margin {margin:.3e})")
        w_inv_lead = np.linalg.inv(w_eps)[:p, :p]
        gap = float(np.max(np.abs(w_inv_lead - v_inv)))
        steps.append(EmbeddingStep(eps=eps, delta=delta, margin=margin, gap=gap))
    return steps
