"""States, POVMs, Born-rule distributions, fidelity and model families.

A parametric model maps a real parameter vector theta to a density matrix
together with its exact derivatives.  The builtin families are

- ``bloch_full``       full qubit, rho = (1 + theta.sigma)/2, p = 3
- ``bloch_equatorial`` equatorial-plane qubit, p = 2
- ``pure_qubit``       pure qubit chart, p = 2
- ``pure_dim_d``       pure state in dimension d, p = 2(d-1)
- ``affine_custom``    rho(theta) = rho0 + sum_i theta_i B_i

Pure families use the chart in which the first amplitude is real and
non-negative: the remaining amplitudes' real/imaginary parts are the
parameters, so p = 2(d-1) and the chart is the open unit ball.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import DimensionMismatchError, DomainError
from .linalg import PAULIS, check_hermitian, hermitize, psd_sqrt

FAMILIES = ("bloch_full", "bloch_equatorial", "pure_qubit", "pure_dim_d", "affine_custom")


# ---------------------------------------------------------------------------
# basic validation

def check_density_matrix(rho, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Validate Hermiticity, positivity and unit trace of a state."""
    rho = check_hermitian(rho, numerics.hermitian_tol, "density matrix")
    w = np.linalg.eigvalsh(rho)
    if w[0] < -numerics.psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {w[0]:.3e}")
    if abs(np.trace(rho).real - 1.0) > numerics.trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
    return rho


@dataclass(frozen=True)
class Domain:
    """Parameter domain: a centred ball or an axis-aligned box."""

    kind: str                      # "ball" | "box"
    radius: float = 1.0            # ball
    bounds: Optional[tuple] = None  # box: ((lo, hi), ...) per coordinate
    dim: int = 0

    def contains(self, theta, tol=1e-12):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "ball":
            return float(np.linalg.norm(theta)) <= self.radius + tol
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return bool(np.all(theta >= lo - tol) and np.all(theta <= hi + tol))

    def project(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "ball":
            r = np.linalg.norm(theta)
            if r > self.radius:
                return theta * (self.radius / r)
            return theta
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(theta, lo, hi)

    @property
    def reference_point(self):
        if self.kind == "ball":
            return np.zeros(self.dim)
        return np.array([(b[0] + b[1]) / 2.0 for b in self.bounds])


# ---------------------------------------------------------------------------
# POVMs

@dataclass(frozen=True)
class Povm:
    """Finite-outcome positive operator valued measure.

    Elements must be PSD and sum to the identity; both are validated at
    construction time.
    """

    elements: tuple
    outcomes: tuple = ()

    def __post_init__(self):
        elems = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        if not elems:
            raise ValueError("POVM needs at least one element")
        d = elems[0].shape[0]
        numerics = DEFAULT_NUMERICS
        total = np.zeros((d, d), dtype=complex)
        for e in elems:
            check_hermitian(e, 1e-10, "POVM element")
            if np.linalg.eigvalsh(hermitize(e))[0] < -numerics.psd_tol:
                raise ValueError("POVM element is not PSD")
            total += e
        if np.max(np.abs(total - np.eye(d))) > numerics.trace_tol:
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", elems)
        if not self.outcomes:
            object.__setattr__(self, "outcomes", tuple(range(len(elems))))
        elif len(self.outcomes) != len(elems):
            raise ValueError("one outcome label per element required")

    @property
    def dim(self):
        return self.elements[0].shape[0]

    def __len__(self):
        return len(self.elements)


def basis_povm(u):
    """Projective POVM built from the columns of a unitary."""
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    return Povm(tuple(np.outer(u[:, x], u[:, x].conj()) for x in range(d)))


def pauli_basis_povm(axis):
    """Eigenbasis POVM of sigma_1, sigma_2 or sigma_3 (axis = 0, 1, 2)."""
    _, v = np.linalg.eigh(PAULIS[axis])
    return basis_povm(v[:, ::-1])  # descending eigenvalue order: "+1" first


def born_distribution(rho, povm: Povm, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """Outcome distribution of a measurement: p_x = trace(rho M_x).

    Tiny negative values (above -prob_floor) are clipped to zero.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[0] != povm.dim:
        raise DimensionMismatchError(
            f"state dimension {rho.shape[0]} != POVM dimension {povm.dim}")
    p = np.array([np.trace(rho @ e).real for e in povm.elements])
    if np.min(p) < -1e3 * numerics.prob_floor:
        raise ValueError(f"negative Born probability {np.min(p):.3e}")
    p = np.clip(p, 0.0, None)
    s = p.sum()
    if abs(s - 1.0) > numerics.trace_tol:
        raise ValueError(f"Born probabilities sum to {s!r}")
    return p


# ---------------------------------------------------------------------------
# fidelity

def fidelity(rho_hat, rho, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """(trace sqrt(rho^1/2 rho_hat rho^1/2))^2, in [0, 1].

    Qubits use the equivalent closed form trace(rho rho_hat) +
    2 sqrt(det rho det rho_hat) and a numerically pure argument uses the
    overlap <phi|rho_hat|phi>; both avoid the half-precision loss of taking
    matrix square roots of rank-deficient states.
    """
    rho_hat = np.asarray(rho_hat, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho_hat.shape != rho.shape:
        raise DimensionMismatchError("states have different dimensions")
    if rho.shape[0] == 2:
        dets = max(np.linalg.det(rho).real, 0.0) * max(np.linalg.det(rho_hat).real, 0.0)
        val = float(np.trace(rho @ rho_hat).real + 2.0 * np.sqrt(max(dets, 0.0)))
        return min(max(val, 0.0), 1.0)
    for a, b in ((rho, rho_hat), (rho_hat, rho)):
        w, v = np.linalg.eigh(a)
        if w[-1] >= 1.0 - 1e3 * numerics.psd_tol:
            phi = v[:, -1]
            return min(max(float((phi.conj() @ b @ phi).real), 0.0), 1.0)
    root = psd_sqrt(rho)
    inner = hermitize(root @ rho_hat @ root)
    w = np.linalg.eigvalsh(inner)
    if w[0] < -1e3 * numerics.psd_tol:
        raise ValueError(f"inner matrix not PSD (eigenvalue {w[0]:.3e})")
    val = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(val, 1.0)


# ---------------------------------------------------------------------------
# parametric models

@dataclass(frozen=True)
class ParametricModel:
    """theta -> rho(theta) with exact derivatives d rho / d theta_i."""

    dim: int
    num_params: int
    domain: Domain
    family: str
    state_fn: Callable = field(repr=False)
    deriv_fn: Callable = field(repr=False)
    is_pure: bool = False
    # affine data (rho(theta) = rho0 + sum theta_i basis_i), when applicable
    rho0: Optional[np.ndarray] = field(default=None, repr=False)
    basis: Optional[tuple] = field(default=None, repr=False)

    def state(self, theta):
        theta = self._check_theta(theta)
        return self.state_fn(theta)

    def derivs(self, theta):
        theta = self._check_theta(theta)
        return self.deriv_fn(theta)

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.num_params:
            raise DimensionMismatchError(
                f"theta has {theta.size} entries, model expects {self.num_params}")
        if not self.domain.contains(theta):
            raise DomainError(f"theta {theta.tolist()} outside model domain")
        return theta


def bloch_state(theta):
    """Qubit state (1 + theta.sigma)/2 for theta in the unit ball."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != 3:
        raise DimensionMismatchError("bloch_state expects a 3-vector")
    if np.linalg.norm(theta) > 1.0 + 1e-12:
        raise DomainError(f"Bloch vector norm {np.linalg.norm(theta)!r} > 1")
    rho = 0.5 * np.eye(2, dtype=complex)
    for t, s in zip(theta, PAULIS):
        rho = rho + 0.5 * t * s
    return rho


def _affine_model(rho0, basis, domain, family, dim):
    rho0 = np.asarray(rho0, dtype=complex)
    basis = tuple(np.asarray(b, dtype=complex) for b in basis)

    def state_fn(theta):
        rho = rho0.copy()
        for t, b in zip(theta, basis):
            rho = rho + t * b
        return rho

    def deriv_fn(theta):
        return [b.copy() for b in basis]

    return ParametricModel(dim=dim, num_params=len(basis), domain=domain,
                           family=family, state_fn=state_fn, deriv_fn=deriv_fn,
                           rho0=rho0, basis=basis)


def bloch_full():
    dom = Domain("ball", radius=1.0, dim=3)
    return _affine_model(0.5 * np.eye(2, dtype=complex),
                         [0.5 * s for s in PAULIS], dom, "bloch_full", 2)


def bloch_equatorial():
    dom = Domain("ball", radius=1.0, dim=2)
    return _affine_model(0.5 * np.eye(2, dtype=complex),
                         [0.5 * PAULIS[0], 0.5 * PAULIS[1]], dom,
                         "bloch_equatorial", 2)


def affine_model(rho0, basis, domain=None, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """User-defined affine family rho(theta) = rho0 + sum_i theta_i B_i.

    The B_i must be traceless Hermitian; rho0 must be a valid state.
    """
    rho0 = check_density_matrix(rho0, numerics)
    d = rho0.shape[0]
    mats = []
    for i, b in enumerate(basis):
        b = check_hermitian(b, 1e-10, f"basis[{i}]")
        if abs(np.trace(b)) > numerics.deriv_trace_tol:
            raise ValueError(f"basis[{i}] has trace {np.trace(b)!r}, must be traceless")
        if b.shape[0] != d:
            raise DimensionMismatchError("basis dimension != rho0 dimension")
        mats.append(b)
    if domain is None:
        domain = Domain("ball", radius=1.0, dim=len(mats))
    model = _affine_model(rho0, mats, domain, "affine_custom", d)
    check_density_matrix(model.state(domain.reference_point), numerics)
    return model


def _pure_amplitudes(theta, d):
    theta = np.asarray(theta, dtype=float)
    nsq = float(theta @ theta)
    if nsq >= 1.0:
        raise DomainError("pure-state chart requires |theta| < 1")
    phi = np.zeros(d, dtype=complex)
    phi[0] = np.sqrt(1.0 - nsq)
    phi[1:] = theta[0::2] + 1j * theta[1::2]
    return phi


def pure_state_model(d):
    """Pure state in dimension d, parameterized by 2(d-1) real coordinates.

    Chart gauge: first amplitude real and positive.  phi(theta) has first
    amplitude sqrt(1 - |theta|^2) and the rest theta[2k] + i theta[2k+1].
    """
    if d < 2:
        raise ValueError("pure-state model needs d >= 2")
    p = 2 * (d - 1)
    dom = Domain("ball", radius=1.0, dim=p)

    def state_fn(theta):
        phi = _pure_amplitudes(theta, d)
        return np.outer(phi, phi.conj())

    def deriv_fn(theta):
        phi = _pure_amplitudes(theta, d)
        phi1 = phi[0].real
        out = []
        for j in range(p):
            v = np.zeros(d, dtype=complex)
            v[0] = -theta[j] / phi1
            v[1 + j // 2] = 1.0 if j % 2 == 0 else 1.0j
            out.append(np.outer(v, phi.conj()) + np.outer(phi, v.conj()))
        return out

    family = "pure_qubit" if d == 2 else "pure_dim_d"
    return ParametricModel(dim=d, num_params=p, domain=dom, family=family,
                           state_fn=state_fn, deriv_fn=deriv_fn, is_pure=True)


def pure_qubit():
    return pure_state_model(2)


def builtin_model(family, dim=None):
    """Look up a builtin family by tag."""
    if family == "bloch_full":
        return bloch_full()
    if family == "bloch_equatorial":
        return bloch_equatorial()
    if family == "pure_qubit":
        return pure_qubit()
    if family == "pure_dim_d":
        if dim is None:
            raise ValueError("pure_dim_d requires dim")
        return pure_state_model(int(dim))
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# fidelity embeddings: loss written exactly as a quadratic form

def fidelity_embedding(model: ParametricModel, theta):
    """Vector psi(theta) and Jacobian psi'(theta) with

    - Bloch families: 1 - Fid = |psi_hat - psi|^2 / 4 exactly,
    - pure families:  1 - Fid = |psi_hat - psi|^2 / 2 exactly.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if model.family in ("bloch_full", "bloch_equatorial"):
        nsq = float(theta @ theta)
        if nsq >= 1.0:
            raise DomainError("embedding Jacobian needs an interior Bloch point")
        tail = np.sqrt(1.0 - nsq)
        psi = np.concatenate([theta, [tail]])
        jac = np.vstack([np.eye(model.num_params), -theta / tail])
        return psi, jac
    if model.is_pure:
        rho = model.state(theta)
        drho = model.derivs(theta)
        psi = np.concatenate([rho.real.ravel(), rho.imag.ravel()])
        jac = np.stack([np.concatenate([dr.real.ravel(), dr.imag.ravel()])
                        for dr in drho], axis=1)
        return psi, jac
    raise ValueError(f"family {model.family!r} has no quadratic fidelity embedding")


def embedding_loss_scale(model: ParametricModel):
    """Scale s with loss = 1 - Fid = s * |psi_hat - psi|^2 (Gtilde = s * I)."""
    if model.family in ("bloch_full", "bloch_equatorial"):
        return 0.25
    if model.is_pure:
        return 0.5
    raise ValueError(f"family {model.family!r} has no quadratic fidelity embedding")


# ---------------------------------------------------------------------------
# JSON model specs

def _matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in a]


def _matrix_from_json(obj):
    return np.array([[complex(e[0], e[1]) for e in row] for row in obj])


def model_to_spec(model: ParametricModel):
    """JSON-serializable description of a model."""
    spec = {"family": model.family, "dim": model.dim}
    if model.family == "affine_custom":
        spec["rho0"] = _matrix_to_json(model.rho0)
        spec["basis"] = [_matrix_to_json(b) for b in model.basis]
        if model.domain.kind == "ball":
            spec["domain"] = {"kind": "ball", "radius": model.domain.radius}
        else:
            spec["domain"] = {"kind": "box", "bounds": [list(b) for b in model.domain.bounds]}
    return spec


def model_from_spec(spec):
    """Build a model from a ModelSpec dict (or a path to a JSON file)."""
    if isinstance(spec, str):
        with open(spec, encoding="utf-8") as fh:
            spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ValueError("model spec must be a JSON object")
    allowed = {"family", "dim", "rho0", "basis", "domain"}
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown model spec keys: {sorted(unknown)}")
    family = spec.get("family")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if family != "affine_custom":
        return builtin_model(family, dim=spec.get("dim"))
    if "rho0" not in spec or "basis" not in spec:
        raise ValueError("affine_custom spec requires rho0 and basis")
    rho0 = _matrix_from_json(spec["rho0"])
    basis = [_matrix_from_json(b) for b in spec["basis"]]
    domain = None
    if "domain" in spec:
        dd = spec["domain"]
        unknown = set(dd) - {"kind", "radius", "bounds"}
        if unknown:
            raise ValueError(f"unknown domain keys: {sorted(unknown)}")
        if dd.get("kind") == "ball":
            domain = Domain("ball", radius=float(dd.get("radius", 1.0)), dim=len(basis))
        elif dd.get("kind") == "box":
            domain = Domain("box", bounds=tuple(tuple(b) for b in dd["bounds"]),
                            dim=len(basis))
        else:
            raise ValueError(f"unknown domain kind {dd.get('kind')!r}")
    return affine_model(rho0, basis, domain)
