"""Exact numerics on the truncated chain.

Everything here works on the rate matrix of an enumerated box: stationary
vectors, transient distributions through uniformization, quadratic forms
under the stationary law, and the optimal variance-to-energy constant.

Conventions. The chain is not reversible; the energy form
``-mu(f * Qf) = mu(Gamma(f, f))`` only sees the symmetric part of the
generator in the mu-weighted inner product, so the optimal constant is the
inverse of the smallest nonzero eigenvalue of that symmetrized operator
restricted to the support of mu. Transient states (no inflow) carry zero
stationary mass and are excluded from all spectral computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .statespace import SparseGenerator

__all__ = [
    "DegenerateModelError",
    "StationaryDistribution",
    "GapResult",
    "stationary",
    "transient_distribution",
    "propagate_function",
    "variance_and_energy",
    "gamma_vector",
    "poincare_constant",
    "weighted_F_exact",
    "weighted_F_vector",
    "semigroup_variance_profile",
]

DENSE_CUTOFF = 2000
POWER_TOL = 1e-15
POWER_MAXITER = 500_000


class DegenerateModelError(RuntimeError):
    """The request is well-posed only on a richer model (e.g. one-point support)."""


def _as_matrix(gen) -> sp.csr_matrix:
    if isinstance(gen, SparseGenerator):
        return gen.matrix
    return sp.csr_matrix(gen)


def _closed_classes(q: sp.csr_matrix):
    """Strongly connected components of the positive-rate graph, split into
    closed (no outgoing rate) and open ones. Returns (closed_labels, labels)."""
    adj = sp.csr_matrix((q > 0).astype(np.int8))
    ncc, labels = csgraph.connected_components(adj, connection="strong")
    coo = q.tocoo()
    has_exit = set()
    for a, b, v in zip(coo.row, coo.col, coo.data):
        if v > 0 and labels[a] != labels[b]:
            has_exit.add(labels[a])
    closed = [c for c in range(ncc) if c not in has_exit]
    return closed, labels


def _gth_solve(q_supp: np.ndarray) -> np.ndarray:
    """Stationary vector of an irreducible generator by GTH elimination.

    The elimination never subtracts, so every component comes out with full
    relative accuracy even when the stationary mass spans hundreds of orders
    of magnitude. Cubic cost; intended for the dense regime.
    """
    n = q_supp.shape[0]
    if n == 1:
        return np.ones(1)
    a = np.array(q_supp, dtype=float)
    np.fill_diagonal(a, 0.0)
    exit_rate = np.zeros(n)
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        if s <= 0:
            raise ValueError(
                f"state {k} cannot reach earlier states; generator not irreducible"
            )
        exit_rate[k] = s
        a[k, :k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    mu = np.zeros(n)
    mu[0] = 1.0
    for k in range(1, n):
        mu[k] = (mu[:k] @ a[:k, k]) / exit_rate[k]
    return mu / mu.sum()


def _dense_nullspace_solve(q_supp: np.ndarray) -> np.ndarray:
    """Least-squares solve of mu^T Q = 0, sum(mu) = 1 on the support."""
    n = q_supp.shape[0]
    a = np.vstack([q_supp.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu, *_ = np.linalg.lstsq(a, b, rcond=None)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def _power_iteration_solve(q_supp: sp.csr_matrix) -> np.ndarray:
    """Stationary vector from power iteration on P = I + Q/Lambda."""
    n = q_supp.shape[0]
    if n == 1:
        return np.ones(1)
    lam = float(-q_supp.diagonal().min())
    if lam <= 0:
        raise ValueError("support has no motion; power iteration undefined")
    p = sp.eye(n, format="csr") + q_supp / lam
    v = np.full(n, 1.0 / n)
    for _ in range(POWER_MAXITER):
        v2 = v @ p
        delta = 0.5 * np.abs(v2 - v).sum()
        v = v2
        if delta < POWER_TOL:
            break
    else:
        raise RuntimeError(f"power iteration did not settle below {POWER_TOL}")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary law of the truncated chain.

    ``probabilities`` spans the whole enumeration, with exact zeros on
    transient states. ``support`` holds the indices of the unique closed
    communicating class. ``dense_tv`` / ``power_tv`` record the total
    variation distance of the primary (elimination-based) solution to the
    dense null-space and power-iteration cross-checks, when those ran.
    """

    probabilities: np.ndarray
    residual: float
    support: np.ndarray
    method: str
    dense_tv: float | None = None
    power_tv: float | None = None

    @property
    def on_support(self) -> np.ndarray:
        return self.probabilities[self.support]

    def expectation(self, f: np.ndarray) -> float:
        return float(self.probabilities @ np.asarray(f, dtype=float))


def stationary(gen, dense_cutoff: int = DENSE_CUTOFF) -> StationaryDistribution:
    """Stationary distribution of the truncated chain.

    Requires a unique closed communicating class; otherwise raises naming two
    states that cannot communicate. The primary solve is GTH elimination
    (componentwise relative accuracy, needed because tail states can carry
    mass far below the absolute float noise floor of a least-squares solve);
    the dense null-space solve and power iteration on the uniformized kernel
    run as cross-checks at small and any dimension respectively.
    """
    q = _as_matrix(gen)
    n = q.shape[0]
    closed, labels = _closed_classes(q)
    if len(closed) > 1:
        a = int(np.nonzero(labels == closed[0])[0][0])
        b = int(np.nonzero(labels == closed[1])[0][0])
        space = gen.space if isinstance(gen, SparseGenerator) else None
        if space is not None:
            sa, sb = space.states[a], space.states[b]
            detail = f"states {sa.numerators} and {sb.numerators}"
        else:
            detail = f"states #{a} and #{b}"
        raise DegenerateModelError(
            f"chain has {len(closed)} closed classes; {detail} do not communicate"
        )
    support = np.nonzero(labels == closed[0])[0]
    q_supp = q[np.ix_(support, support)].toarray()
    mu_supp = _gth_solve(q_supp)

    dense_tv = None
    if len(support) <= dense_cutoff:
        mu_dense = _dense_nullspace_solve(q_supp)
        dense_tv = float(0.5 * np.abs(mu_supp - mu_dense).sum())
    mu_power = _power_iteration_solve(sp.csr_matrix(q_supp))
    power_tv = float(0.5 * np.abs(mu_supp - mu_power).sum())

    mu = np.zeros(n)
    mu[support] = mu_supp
    residual = float(np.abs(mu @ q).max())
    return StationaryDistribution(
        probabilities=mu,
        residual=residual,
        support=support,
        method="gth",
        dense_tv=dense_tv,
        power_tv=power_tv,
    )


# -- uniformization -----------------------------------------------------------

def _uniformization_rate(q: sp.csr_matrix) -> float:
    return float(-q.diagonal().min())


def _log_poisson_pmf(m: float, k: int) -> float:
    if k == 0:
        return -m
    return -m + k * math.log(m) - math.lgamma(k + 1)


def transient_distribution(gen, x0: int, t: float, eps: float = 1e-12) -> np.ndarray:
    """Distribution at time t started from state index x0.

    Uniformization: the law at time t is a Poisson mixture over powers of the
    discrete kernel P = I + Q/Lambda. The series is cut once the accumulated
    Poisson mass reaches 1 - eps, so the dropped tail is at most eps; the
    result is nonnegative and sums to 1 within eps. Each Poisson weight is
    evaluated in log space, which survives Lambda*t in the hundreds.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    q = _as_matrix(gen)
    n = q.shape[0]
    v = np.zeros(n)
    v[x0] = 1.0
    lam = _uniformization_rate(q)
    if t == 0 or lam == 0:
        return v
    p = sp.eye(n, format="csr") + q / lam
    m = lam * t
    acc = np.zeros(n)
    cum = 0.0
    k = 0
    k_cap = int(20 * m) + 500
    while cum < 1.0 - eps:
        w = math.exp(_log_poisson_pmf(m, k))
        acc += w * v
        cum += w
        v = v @ p
        k += 1
        if k > k_cap:
            raise RuntimeError("uniformization series failed to accumulate mass")
    return acc


def propagate_function(gen, f: np.ndarray, t: float, eps: float = 1e-12) -> np.ndarray:
    """E[f(X_t)] started from every state at once (the semigroup applied to f)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    q = _as_matrix(gen)
    v = np.asarray(f, dtype=float).copy()
    lam = _uniformization_rate(q)
    if t == 0 or lam == 0:
        return v
    p = sp.eye(q.shape[0], format="csr") + q / lam
    m = lam * t
    acc = np.zeros_like(v)
    cum = 0.0
    k = 0
    k_cap = int(20 * m) + 500
    while cum < 1.0 - eps:
        w = math.exp(_log_poisson_pmf(m, k))
        acc += w * v
        cum += w
        v = p @ v
        k += 1
        if k > k_cap:
            raise RuntimeError("uniformization series failed to accumulate mass")
    # the dropped tail multiplies a bounded function; fold it onto the last iterate
    return acc + (1.0 - cum) * v


# -- quadratic forms ----------------------------------------------------------

def gamma_vector(gen, f: np.ndarray) -> np.ndarray:
    """Carre-du-champ of the truncated chain, tabulated: 0.5*(Q f^2 - 2 f Qf)."""
    q = _as_matrix(gen)
    f = np.asarray(f, dtype=float)
    return 0.5 * (q @ (f * f) - 2.0 * f * (q @ f))


def variance_and_energy(gen, mu: StationaryDistribution, f: np.ndarray):
    """(Var_mu(f), mu(Gamma(f,f))). Under stationarity the energy equals -mu(f*Qf)."""
    q = _as_matrix(gen)
    f = np.asarray(f, dtype=float)
    p = mu.probabilities
    fbar = p @ f
    var = float(p @ (f - fbar) ** 2)
    energy = float(-(p @ (f * (q @ f))))
    return var, energy


@dataclass(frozen=True)
class GapResult:
    """Optimal variance-to-energy constant and the function achieving it.

    ``c_opt`` is the largest possible ratio Var_mu(f) / mu(Gamma(f,f)) over
    nonconstant f on the support; ``gap = 1/c_opt`` is the smallest nonzero
    eigenvalue of the symmetrized generator. ``optimizer`` spans the full
    enumeration with zeros off the support. ``degenerate`` marks a one-point
    support, where no nonconstant f exists.
    """

    c_opt: float | None
    gap: float | None
    optimizer: np.ndarray | None
    method: str
    degenerate: bool = False


def poincare_constant(
    gen, mu: StationaryDistribution, dense_cutoff: int = DENSE_CUTOFF, method: str = "auto"
) -> GapResult:
    """Best constant C with Var_mu(f) <= C * mu(Gamma(f,f)) on the support.

    Computed as 1/lambda_1, with lambda_1 the smallest nonzero eigenvalue of
    the mu-symmetrized negative generator. The similarity transform by
    diag(sqrt(mu)) makes that operator an ordinary symmetric matrix whose
    entries involve only square roots of stationary-mass ratios between
    neighbouring states, which stay moderate even when the masses themselves
    do not.
    """
    q = _as_matrix(gen)
    support = mu.support
    ns = len(support)
    if ns <= 1:
        return GapResult(c_opt=None, gap=None, optimizer=None, method="none", degenerate=True)
    mu_s = mu.probabilities[support]
    if np.any(mu_s <= 0):
        raise ValueError("stationary mass underflowed to zero on the support")
    q_supp = q[np.ix_(support, support)]
    sq = np.sqrt(mu_s)

    if method == "auto":
        method = "direct" if ns <= dense_cutoff else "iterative"

    if method == "direct":
        m = -q_supp.toarray() * (sq[:, None] / sq[None, :])
        b = 0.5 * (m + m.T)
        vals, vecs = np.linalg.eigh(b)
        lam1 = float(vals[1])
        vec = vecs[:, 1]
    elif method == "iterative":
        scale_l = sp.diags(sq)
        scale_r = sp.diags(1.0 / sq)
        m = (-(scale_l @ q_supp @ scale_r)).tocsr()
        b = (0.5 * (m + m.T)).tocsr()
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((ns, 2))
        kernel = sq.reshape(-1, 1)
        vals, vecs = spla.lobpcg(
            b, x0, Y=kernel, largest=False, tol=1e-12, maxiter=5000
        )
        order = np.argsort(vals)
        lam1 = float(vals[order[0]])
        vec = vecs[:, order[0]]
    else:
        raise ValueError(f"unknown method {method!r}")

    if lam1 <= 0:
        raise RuntimeError(f"nonpositive spectral gap {lam1}; eigensolve failed")
    f_supp = vec / sq
    f_supp = f_supp - (mu_s @ f_supp)
    f_full = np.zeros(q.shape[0])
    f_full[support] = f_supp
    return GapResult(
        c_opt=1.0 / lam1,
        gap=lam1,
        optimizer=f_full,
        method=method,
        degenerate=False,
    )


# -- weighted time integrals --------------------------------------------------

def weighted_F_vector(gen, phibar: np.ndarray, t: float, eps: float = 1e-12) -> np.ndarray:
    """integral_0^t E[phibar(X_s)] ds from every state at once.

    Integrating the uniformization mixture term by term turns the Poisson
    weights into upper tail probabilities: the integral equals
    (1/Lambda) * sum_k P(Pois(Lambda t) > k) * (P^k phibar). The series stops
    once the remaining tail mass, multiplied by max phibar / Lambda, is below
    eps, so the truncation error is at most eps.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    q = _as_matrix(gen)
    phibar = np.asarray(phibar, dtype=float)
    if t == 0:
        return np.zeros_like(phibar)
    lam = _uniformization_rate(q)
    if lam == 0:
        return phibar * t
    p = sp.eye(q.shape[0], format="csr") + q / lam
    m = lam * t
    bound = float(np.abs(phibar).max())
    acc = np.zeros_like(phibar)
    v = phibar.copy()
    cdf = 0.0
    remaining = m  # sum over k of the upper tails equals the mean
    k = 0
    k_cap = int(20 * m) + 500
    while True:
        cdf += math.exp(_log_poisson_pmf(m, k))
        tail = max(1.0 - cdf, 0.0)
        acc += tail * v
        remaining -= tail
        if remaining * bound / lam <= eps or tail == 0.0:
            break
        v = p @ v
        k += 1
        if k > k_cap:
            raise RuntimeError("time-integral series failed to accumulate mass")
    return acc / lam


def weighted_F_exact(gen, phibar: np.ndarray, x0: int, t: float, eps: float = 1e-12) -> float:
    """integral_0^t E[phibar(X_s)] ds from state index x0."""
    return float(weighted_F_vector(gen, phibar, t, eps)[x0])


def semigroup_variance_profile(
    gen,
    mu: StationaryDistribution,
    f: np.ndarray,
    t_grid,
    eps: float = 1e-12,
    indicator: np.ndarray | None = None,
    phibar: np.ndarray | None = None,
):
    """Per-time functionals entering the weighted variance inequality.

    For each t in t_grid returns the triple
        lhs(t)      = mu( Var under P_t of f ),
        energy      = mu( Gamma(f, f) ),
        weighted(t) = mu( F_t * P_t(Gamma(f, f) * 1_D) ),
    where F_t is the state-wise expected firing effort up to t and 1_D the
    supplied indicator (all-ones when None). phibar defaults to the total
    firing rate read off the enumerated space.
    """
    q = _as_matrix(gen)
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid):
        raise ValueError("t_grid must be nonnegative")
    f = np.asarray(f, dtype=float)
    if phibar is None:
        if not isinstance(gen, SparseGenerator) or gen.space is None:
            raise ValueError("phibar is required when gen has no enumerated space")
        phibar = gen.space.total_rates()
    ind = np.ones_like(f) if indicator is None else np.asarray(indicator, dtype=float)
    p = mu.probabilities
    gam = gamma_vector(q, f)
    energy = float(p @ gam)
    lhs, weighted = [], []
    for t in t_grid:
        ptf = propagate_function(q, f, t, eps)
        ptf2 = propagate_function(q, f * f, t, eps)
        lhs.append(float(p @ (ptf2 - ptf**2)))
        fv = weighted_F_vector(q, phibar, t, eps)
        pt_loc = propagate_function(q, gam * ind, t, eps)
        weighted.append(float(p @ (fv * pt_loc)))
    return np.array(lhs), energy, np.array(weighted)
