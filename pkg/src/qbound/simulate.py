"""Monte Carlo harness for separable measurement-and-estimation schemes.

Schemes draw one projective basis per copy (fixed, alternating, uniformly
random, or two-step adaptive), sample outcomes through the Born rule, and
feed estimators (maximum likelihood, posterior mean, or a test-only oracle).
Risk runs are reproducible: the RNG of trial t is derived from
(seed, spawn_key=t), so results do not depend on how trials are distributed
over workers.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bayes import Prior, prior_from_spec, prior_to_spec
from .information import InfoMatrix, povm_fisher
from .linalg import PAULIS, haar_unitaries
from .models import (ParametricModel, basis_povm, fidelity, model_from_spec,
                     model_to_spec)

PAULI_BASES = tuple(np.linalg.eigh(s)[1][:, ::-1] for s in PAULIS)


# ---------------------------------------------------------------------------
# schemes

@dataclass(frozen=True)
class MeasurementScheme:
    """Per-copy basis choice rule.

    kind: fixed_basis | alternating_bases | random_basis_covariant |
    two_step_adaptive.  ``bases`` holds the (stage-1) unitaries where
    applicable; ``first_fraction`` is the stage-1 share for two-step.
    """

    kind: str
    bases: tuple = ()
    first_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bases",
                           tuple(np.asarray(b, dtype=complex) for b in self.bases))


def fixed_basis_scheme(basis):
    return MeasurementScheme("fixed_basis", (basis,))


def alternating_scheme(bases):
    if len(bases) < 1:
        raise ValueError("alternating scheme needs at least one basis")
    return MeasurementScheme("alternating_bases", tuple(bases))


def random_basis_scheme():
    """Uniformly random basis per copy (the covariant exhaustive scheme)."""
    return MeasurementScheme("random_basis_covariant")


def two_step_scheme(model: ParametricModel, first_fraction):
    """Stage 1: a fixed informationally complete basis cycle; stage 2:
    bases adapted to the stage-1 estimate (see :func:`adapted_bases`)."""
    if not 0.0 < first_fraction < 1.0:
        raise ValueError("first_fraction must lie strictly between 0 and 1")
    if model.family in ("bloch_full", "pure_qubit"):
        stage1 = PAULI_BASES
    elif model.family == "bloch_equatorial":
        stage1 = PAULI_BASES[:2]
    else:
        raise ValueError(f"two-step scheme not defined for family {model.family!r}")
    return MeasurementScheme("two_step_adaptive", stage1, first_fraction)


def _direction_basis(u):
    """Eigenbasis of u . sigma for a unit vector u, eigenvalue +1 first."""
    op = u[0] * PAULIS[0] + u[1] * PAULIS[1] + u[2] * PAULIS[2]
    _, v = np.linalg.eigh(op)
    return v[:, ::-1]


def _orthonormal_frame(r):
    a = np.array([0.0, 0.0, 1.0]) if abs(r[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(r, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(r, t1)


def adapted_bases(model: ParametricModel, theta_hat):
    """Stage-2 bases for the two-step scheme, adapted to an estimate.

    The eigen-directions of the weight H/4 at the estimate are measured in
    equal proportion (alternating the adapted bases), which attains the
    separable-scheme optimum for the qubit families.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if model.family == "bloch_equatorial":
        norm = np.linalg.norm(theta_hat)
        ang = math.atan2(theta_hat[1], theta_hat[0]) if norm > 1e-9 else 0.0
        radial = np.array([math.cos(ang), math.sin(ang), 0.0])
        tangent = np.array([-math.sin(ang), math.cos(ang), 0.0])
        return (_direction_basis(radial), _direction_basis(tangent))
    if model.family == "bloch_full":
        norm = np.linalg.norm(theta_hat)
        r = theta_hat / norm if norm > 1e-9 else np.array([0.0, 0.0, 1.0])
        t1, t2 = _orthonormal_frame(r)
        return (_direction_basis(r), _direction_basis(t1), _direction_basis(t2))
    if model.family == "pure_qubit":
        rho = model.state(model.domain.project(theta_hat * (1.0 - 1e-12)))
        bloch = np.array([np.trace(rho @ s).real for s in PAULIS])
        bloch /= np.linalg.norm(bloch)
        t1, t2 = _orthonormal_frame(bloch)
        return (_direction_basis(t1), _direction_basis(t2))
    raise ValueError(f"no adapted bases for family {model.family!r}")


# ---------------------------------------------------------------------------
# outcome sampling

@dataclass(frozen=True)
class SampleData:
    """Realized per-copy bases and outcomes of a scheme run."""

    bases: np.ndarray        # (K, d, d); columns of each unitary are the basis
    basis_index: np.ndarray  # (N,)
    outcomes: np.ndarray     # (N,)
    n_copies: int
    scheme_kind: str
    stage1_bases: int = 0    # two-step: bases[:stage1_bases] are stage 1
    stage1_copies: int = 0


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _basis_probs(rho, u):
    return np.clip(np.einsum("ix,ij,jx->x", u.conj(), rho, u).real, 0.0, None)


def _sample_from_probs(probs, u):
    cum = np.cumsum(probs)
    cum /= cum[-1]
    return np.searchsorted(cum, u, side="right").clip(0, probs.size - 1)


def sample_outcomes(model: ParametricModel, theta, scheme: MeasurementScheme,
                    n_copies, seed=0) -> SampleData:
    """i.i.d. Born sampling of a scheme; reproducible for a fixed seed."""
    if n_copies < 1:
        raise ValueError("n_copies must be >= 1")
    rng = _as_rng(seed)
    rho = model.state(theta)
    d = model.dim

    if scheme.kind in ("fixed_basis", "alternating_bases"):
        bases = np.stack(scheme.bases)
        idx = np.arange(n_copies) % len(scheme.bases)
        u = rng.random(n_copies)
        outcomes = np.empty(n_copies, dtype=np.int64)
        for k in range(len(scheme.bases)):
            mask = idx == k
            outcomes[mask] = _sample_from_probs(_basis_probs(rho, bases[k]), u[mask])
        return SampleData(bases, idx, outcomes, n_copies, scheme.kind)

    if scheme.kind == "random_basis_covariant":
        bases = haar_unitaries(d, n_copies, rng)
        probs = np.einsum("nix,ij,njx->nx", bases.conj(), rho, bases).real
        probs = np.clip(probs, 0.0, None)
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        u = rng.random(n_copies)
        outcomes = (u[:, None] > cum).sum(axis=1).clip(0, d - 1)
        return SampleData(bases, np.arange(n_copies), outcomes, n_copies, scheme.kind)

    if scheme.kind == "two_step_adaptive":
        n1 = max(1, int(math.ceil(scheme.first_fraction * n_copies)))
        if n1 >= n_copies:
            n1 = n_copies - 1
        u = rng.random(n_copies)  # drawn up front: stage split cannot peek ahead
        stage1 = np.stack(scheme.bases)
        k1 = len(scheme.bases)
        idx1 = np.arange(n1) % k1
        out1 = np.empty(n1, dtype=np.int64)
        for k in range(k1):
            mask = idx1 == k
            out1[mask] = _sample_from_probs(_basis_probs(rho, stage1[k]), u[:n1][mask])
        first = SampleData(stage1, idx1, out1, n1, "alternating_bases")
        theta1 = mle_estimate(first, model).theta
        stage2 = adapted_bases(model, theta1)
        k2 = len(stage2)
        idx2 = k1 + np.arange(n_copies - n1) % k2
        out2 = np.empty(n_copies - n1, dtype=np.int64)
        for k in range(k2):
            mask = idx2 == k1 + k
            out2[mask] = _sample_from_probs(_basis_probs(rho, stage2[k]), u[n1:][mask])
        bases = np.concatenate([stage1, np.stack(stage2)])
        return SampleData(bases, np.concatenate([idx1, idx2]),
                          np.concatenate([out1, out2]), n_copies,
                          scheme.kind, stage1_bases=k1, stage1_copies=n1)

    raise ValueError(f"unknown scheme kind {scheme.kind!r}")


# ---------------------------------------------------------------------------
# estimators

@dataclass(frozen=True)
class MleResult:
    theta: np.ndarray
    boundary: bool
    converged: bool
    loglik: float


@dataclass(frozen=True)
class Estimator:
    """mle | bayes_mean (posterior mean) | oracle (test-only, returns truth)."""

    kind: str = "mle"
    prior: Optional[Prior] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("mle", "bayes_mean", "oracle"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")


def _outcome_vectors(data: SampleData):
    sel = data.bases[data.basis_index]
    return sel[np.arange(data.n_copies), :, data.outcomes]


def mle_estimate(data: SampleData, model: ParametricModel, tol=1e-8,
                 max_iters=400, multistart=3, seed=0) -> MleResult:
    """Maximum likelihood estimate of theta from sampled outcomes.

    Affine families have a concave log-likelihood over the domain and use
    projected gradient ascent; pure families ascend on the amplitude sphere
    (projected Riemannian gradient, 3 starts) and convert back to the chart.
    A degenerate all-boundary likelihood sets the boundary flag instead of
    raising.
    """
    vecs = _outcome_vectors(data)
    if model.is_pure:
        return _mle_pure(vecs, model, tol, max_iters, multistart, seed)
    return _mle_affine(vecs, model, tol, max_iters)


def _mle_affine(vecs, model, tol, max_iters):
    rho0, bmats = model.rho0, model.basis
    a = np.einsum("ni,ij,nj->n", vecs.conj(), rho0, vecs).real
    b = np.stack([np.einsum("ni,ij,nj->n", vecs.conj(), bm, vecs).real
                  for bm in bmats], axis=1)
    dom = model.domain
    theta = dom.reference_point.copy()

    def loglik(t):
        p = a + b @ t
        if np.any(p <= 0.0):
            return -np.inf
        return float(np.sum(np.log(p)))

    f = loglik(theta)
    step = 1.0
    converged = False
    for _ in range(max_iters):
        p = a + b @ theta
        grad = b.T @ (1.0 / p)
        gnorm = float(np.linalg.norm(grad))
        moved = False
        while step > 1e-14:
            cand = dom.project(theta + step * grad)
            fc = loglik(cand)
            if fc > f + 1e-12:
                theta, f = cand, fc
                step = min(step * 1.8, 1e3)
                moved = True
                break
            step *= 0.5
        if not moved or gnorm < tol * max(1.0, len(vecs)):
            converged = True
            break
    if dom.kind == "ball":
        boundary = np.linalg.norm(theta) >= dom.radius * (1.0 - 1e-7)
    else:
        lo = np.array([x[0] for x in dom.bounds])
        hi = np.array([x[1] for x in dom.bounds])
        boundary = bool(np.any(theta <= lo + 1e-7) or np.any(theta >= hi - 1e-7))
    return MleResult(theta, boundary, converged, f)


def _mle_pure(vecs, model, tol, max_iters, multistart, seed):
    d = model.dim
    arows = vecs.conj()
    gram = vecs.T.conj() @ vecs  # spectral start: top eigenvector of sum P_i
    _, evecs = np.linalg.eigh(gram)
    starts = [evecs[:, -1]]
    rng = np.random.default_rng(seed)
    for _ in range(max(0, multistart - 1)):
        z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        starts.append(z / np.linalg.norm(z))

    def loglik(phi):
        p = np.abs(arows @ phi) ** 2
        if np.any(p <= 1e-300):
            return -np.inf
        return float(np.sum(np.log(p)))

    best = (-np.inf, starts[0] / np.linalg.norm(starts[0]), False)
    for phi in starts:
        phi = phi / np.linalg.norm(phi)
        f = loglik(phi)
        if not np.isfinite(f):
            phi = (phi + 1e-6 * np.ones(d)) / np.linalg.norm(phi + 1e-6 * np.ones(d))
            f = loglik(phi)
            if not np.isfinite(f):
                continue
        step = 1.0 / max(1.0, len(arows))
        converged = False
        for _ in range(max_iters):
            amp = arows @ phi
            grad = arows.conj().T @ (amp / np.abs(amp) ** 2)
            grad -= phi * (phi.conj() @ grad)  # tangent projection
            gnorm = float(np.linalg.norm(grad))
            if gnorm < tol * max(1.0, len(arows)):
                converged = True
                break
            moved = False
            while step > 1e-16:
                cand = phi + step * grad
                cand /= np.linalg.norm(cand)
                fc = loglik(cand)
                if fc > f + 1e-12:
                    phi, f = cand, fc
                    step = min(step * 1.8, 1e3)
                    moved = True
                    break
                step *= 0.5
            if not moved:
                converged = True
                break
        if f > best[0]:
            best = (f, phi, converged)

    f, phi, converged = best
    if abs(phi[0]) > 1e-12:
        phi = phi * (phi[0].conj() / abs(phi[0]))
    boundary = abs(phi[0].real) < 1e-6
    theta = np.empty(2 * (d - 1))
    theta[0::2] = phi[1:].real
    theta[1::2] = phi[1:].imag
    nrm = np.linalg.norm(theta)
    if nrm >= 1.0:
        theta *= (1.0 - 1e-9) / nrm
        boundary = True
    return MleResult(theta, boundary, converged, f)


def _chart_loglik(data, model):
    vecs = _outcome_vectors(data)
    if model.is_pure:
        arows = vecs.conj()

        def loglik(theta):
            nsq = float(theta @ theta)
            if nsq >= 1.0:
                return -np.inf
            phi = np.concatenate([[math.sqrt(1.0 - nsq)],
                                  theta[0::2] + 1j * theta[1::2]])
            p = np.abs(arows @ phi) ** 2
            return float(np.sum(np.log(np.clip(p, 1e-300, None))))

        return loglik
    rho0, bmats = model.rho0, model.basis
    a = np.einsum("ni,ij,nj->n", vecs.conj(), rho0, vecs).real
    b = np.stack([np.einsum("ni,ij,nj->n", vecs.conj(), bm, vecs).real
                  for bm in bmats], axis=1)

    def loglik(theta):
        p = a + b @ theta
        if np.any(p <= 0.0):
            return -np.inf
        return float(np.sum(np.log(p)))

    return loglik


def bayes_mean_estimate(data: SampleData, model: ParametricModel, prior: Prior,
                        n_samples=256, spread=1.3, seed=0):
    """Posterior mean via Laplace-guided importance sampling.

    Proposes from a normal centred at the MLE with covariance from a
    finite-difference Hessian; falls back to the MLE when the effective
    sample size degenerates.
    """
    mle = mle_estimate(data, model, seed=seed)
    loglik = _chart_loglik(data, model)
    p = model.num_params
    center = model.domain.project(mle.theta * (1.0 - 1e-9))
    h = 1e-4
    hess = np.zeros((p, p))
    f0 = loglik(center)
    for i in range(p):
        for j in range(i, p):
            ei = np.zeros(p); ei[i] = h
            ej = np.zeros(p); ej[j] = h
            fij = loglik(center + ei + ej)
            fi = loglik(center + ei)
            fj = loglik(center + ej)
            if not all(np.isfinite(v) for v in (fij, fi, fj, f0)):
                return mle.theta, mle
            hess[i, j] = hess[j, i] = (fij - fi - fj + f0) / h ** 2
    cov = np.linalg.inv(-hess + 1e-6 * np.eye(p)) * spread ** 2
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    root = (v * np.sqrt(np.clip(w, 1e-12, None))) @ v.T
    rng = np.random.default_rng(seed)
    draws = center + rng.standard_normal((n_samples, p)) @ root.T
    logq = -0.5 * np.einsum("ni,ij,nj->n", draws - center,
                            np.linalg.inv(cov), draws - center)
    logw = np.full(n_samples, -np.inf)
    for i, t in enumerate(draws):
        if not model.domain.contains(t):
            continue
        dens = prior.density(t)
        if dens <= 0.0:
            continue
        ll = loglik(t)
        if np.isfinite(ll):
            logw[i] = ll + math.log(dens) - logq[i]
    finite = np.isfinite(logw)
    if finite.sum() < 8:
        return mle.theta, mle
    lw = logw[finite] - np.max(logw[finite])
    wts = np.exp(lw)
    ess = wts.sum() ** 2 / (wts ** 2).sum()
    if ess < 8:
        return mle.theta, mle
    theta = (wts[:, None] * draws[finite]).sum(axis=0) / wts.sum()
    return model.domain.project(theta), mle


# ---------------------------------------------------------------------------
# empirical information

def empirical_fisher(model: ParametricModel, theta, scheme: MeasurementScheme,
                     n_bases=1000, seed=0) -> InfoMatrix:
    """Per-copy average Fisher information of a scheme at theta.

    Randomized schemes average povm_fisher over sampled bases (the recorded
    basis is part of the outcome, so the scheme information is the basis
    average) and report an entrywise Monte Carlo standard error.  For the
    two-step scheme the stage-2 bases are adapted at theta itself, i.e. the
    reported matrix is the scheme's asymptotic per-copy information.
    """
    if scheme.kind == "fixed_basis":
        info = povm_fisher(model, theta, basis_povm(scheme.bases[0]))
        return InfoMatrix(info.matrix, "povm_fisher",
                          std_error=np.zeros_like(info.matrix))
    if scheme.kind == "alternating_bases":
        mats = [povm_fisher(model, theta, basis_povm(b)).matrix for b in scheme.bases]
        return InfoMatrix(np.mean(mats, axis=0), "povm_fisher",
                          std_error=np.zeros((model.num_params,) * 2))
    if scheme.kind == "random_basis_covariant":
        if n_bases < 1:
            raise ValueError("n_bases must be >= 1 for randomized schemes")
        rng = np.random.default_rng(seed)
        us = haar_unitaries(model.dim, n_bases, rng)
        mats = np.stack([povm_fisher(model, theta, basis_povm(u)).matrix for u in us])
        se = mats.std(axis=0, ddof=1) / math.sqrt(n_bases) if n_bases > 1 \
            else np.zeros((model.num_params,) * 2)
        return InfoMatrix(mats.mean(axis=0), "povm_fisher", std_error=se)
    if scheme.kind == "two_step_adaptive":
        f = scheme.first_fraction
        stage1 = np.mean([povm_fisher(model, theta, basis_povm(b)).matrix
                          for b in scheme.bases], axis=0)
        stage2 = np.mean([povm_fisher(model, theta, basis_povm(b)).matrix
                          for b in adapted_bases(model, theta)], axis=0)
        return InfoMatrix(f * stage1 + (1.0 - f) * stage2, "povm_fisher",
                          std_error=np.zeros((model.num_params,) * 2))
    raise ValueError(f"unknown scheme kind {scheme.kind!r}")


# ---------------------------------------------------------------------------
# Bayes risk Monte Carlo

@dataclass(frozen=True)
class RiskEstimate:
    """N x (empirical Bayes risk) with its Monte Carlo standard error."""

    n_copies: int
    trials: int
    value: float
    std_error: float
    loss_summary: dict
    failures: int = 0
    boundary_hits: int = 0

    def to_dict(self):
        return {"n_copies": self.n_copies, "trials": self.trials,
                "value": self.value, "std_error": self.std_error,
                "loss_summary": self.loss_summary, "failures": self.failures,
                "boundary_hits": self.boundary_hits}


def _prior_descriptor(prior: Prior):
    if prior.spec is None:
        raise ValueError(
            f"prior family {prior.family!r} cannot be shipped to workers; "
            "use workers=1 or a builtin prior family")
    return prior_to_spec(prior)


def _prior_from_descriptor(desc):
    return prior_from_spec(desc)


def _run_trials(payload):
    model = model_from_spec(payload["model_spec"])
    prior = _prior_from_descriptor(payload["prior"])
    scheme = MeasurementScheme(payload["scheme_kind"],
                               tuple(payload["scheme_bases"]),
                               payload["first_fraction"])
    est_prior = _prior_from_descriptor(payload["estimator_prior"]) \
        if payload["estimator_prior"] else None
    estimator = Estimator(payload["estimator_kind"], prior=est_prior,
                          options=payload["estimator_options"])
    losses, boundary, errors = [], 0, []
    for t in payload["trial_indices"]:
        loss, hit_boundary, err = _single_trial(
            model, prior, scheme, estimator, payload["n_copies"],
            payload["seed"], t)
        losses.append(loss)
        boundary += hit_boundary
        if err is not None:
            errors.append(err)
    return payload["trial_indices"], losses, boundary, errors


def _single_trial(model, prior, scheme, estimator, n_copies, seed, trial):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))
    theta = prior.sample(rng)
    try:
        data = sample_outcomes(model, theta, scheme, n_copies, seed=rng)
        hit_boundary = 0
        if estimator.kind == "oracle":
            theta_hat = theta
        elif estimator.kind == "mle":
            res = mle_estimate(data, model, **estimator.options)
            theta_hat, hit_boundary = res.theta, int(res.boundary)
        else:
            theta_hat, res = bayes_mean_estimate(
                data, model, estimator.prior or prior, **estimator.options)
            hit_boundary = int(res.boundary)
        safe = model.domain.project(theta_hat)
        if model.is_pure and np.linalg.norm(safe) >= 1.0:
            safe = safe * (1.0 - 1e-9)
        loss = 1.0 - fidelity(model.state(safe), model.state(theta))
        return max(loss, 0.0), hit_boundary, None
    except Exception as exc:  # counted; run aborts if the rate exceeds 1%
        return np.nan, 0, repr(exc)


def bayes_risk_mc(model: ParametricModel, prior: Prior, scheme: MeasurementScheme,
                  estimator: Estimator, n_copies, trials, seed=0,
                  workers=1) -> RiskEstimate:
    """N x empirical Bayes fidelity-risk over seeded independent trials.

    Draws theta from the prior, runs the scheme, estimates, and averages
    1 - Fid(rho(theta_hat), rho(theta)).  Aborts if more than 1% of the
    trials fail in the estimator.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    payload = {
        "model_spec": model_to_spec(model),
        "prior": _prior_descriptor(prior),
        "scheme_kind": scheme.kind,
        "scheme_bases": [np.asarray(b) for b in scheme.bases],
        "first_fraction": scheme.first_fraction,
        "estimator_kind": estimator.kind,
        "estimator_prior": _prior_descriptor(estimator.prior) if estimator.prior else None,
        "estimator_options": dict(estimator.options),
        "n_copies": int(n_copies),
        "seed": seed,
    }
    losses = np.empty(trials)
    boundary = 0
    errors = []
    if workers <= 1:
        payload["trial_indices"] = list(range(trials))
        idx, vals, boundary, errors = _run_trials(payload)
        losses[list(idx)] = vals
    else:
        chunks = []
        size = max(1, math.ceil(trials / (4 * workers)))
        for start in range(0, trials, size):
            chunk = dict(payload)
            chunk["trial_indices"] = list(range(start, min(start + size, trials)))
            chunks.append(chunk)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, vals, bnd, errs in pool.map(_run_trials, chunks):
                losses[list(idx)] = vals
                boundary += bnd
                errors.extend(errs)
    bad = np.isnan(losses)
    failures = int(bad.sum())
    if failures > 0.01 * trials:
        raise RuntimeError(
            f"estimator failed in {failures}/{trials} trials; first errors: "
            f"{errors[:3]}")
    ok = losses[~bad]
    value = float(n_copies * ok.mean())
    std_error = float(n_copies * ok.std(ddof=1) / math.sqrt(ok.size))
    qs = np.quantile(ok, [0.0, 0.25, 0.5, 0.75, 1.0])
    summary = {"min": float(qs[0]), "q25": float(qs[1]), "median": float(qs[2]),
               "q75": float(qs[3]), "max": float(qs[4])}
    return RiskEstimate(int(n_copies), int(trials), value, std_error, summary,
                        failures=failures, boundary_hits=int(boundary))
