"""Concentration and weighted-variance certificates.

This module turns the solved stationary law into explicit, checkable
constants: a graph-path upper bound for the variance-to-energy constant, the
carre-du-champ coefficient for the exponential of the summed potential, the
admissible exponential rate and its infinite-product prefactor, certified
tail curves, and measured growth constants for the weighted semigroup
variance inequality.

Triple-bar norms (sup of mu(f g) over densities g with mu(g) <= 1) reduce on
a finite support to the plain maximum of f over that support; all of them are
computed that way here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    SynapticNetwork,
    apply_generator,
    jump_map,
    jump_window_probabilities,
)
from .spectral import (
    DegenerateModelError,
    StationaryDistribution,
    gamma_vector,
    propagate_function,
    weighted_F_vector,
)
from .statespace import EnumeratedSpace, SparseGenerator, saturate

__all__ = [
    "PathMethodReport",
    "path_method_C0",
    "measure_lyapunov_tail_constant",
    "C3SumReport",
    "compute_C3_sum_function",
    "C3GeneralReport",
    "compute_C3_general",
    "lambda0_product",
    "solve_admissible_lambda",
    "AdmissibleLambda",
    "admissible_lambda",
    "ConcentrationCertificate",
    "TalagrandRow",
    "TalagrandReport",
    "talagrand_verdict",
    "max_peak_time",
    "SemigroupReport",
    "make_function_suite",
    "semigroup_poincare_report",
]


# -- path-method constant -----------------------------------------------------

@dataclass(frozen=True)
class PathMethodReport:
    """Graph-path upper bound for the variance-to-energy constant on the box.

    ``c0`` is N^2 / (2 * min stationary mass on the support * delta). The
    derivation routes every pair of support states through a shortest firing
    sequence, so the report also carries the worst such length (finite on a
    connected support) and any pairs the firing graph cannot connect, for
    which the bound is vacuous.
    """

    c0: float
    min_mu: float
    max_path_length: int
    n_support: int
    disconnected_pairs: tuple = ()
    degenerate: bool = False


def _support_adjacency(net: SynapticNetwork, space: EnumeratedSpace, support) -> list:
    pos_in_supp = {int(k): j for j, k in enumerate(support)}
    adj = [[] for _ in support]
    for j, k in enumerate(support):
        x = space.states[int(k)]
        for i in range(net.n_neurons):
            y = saturate(jump_map(net, x, i), space.m_box)
            tk = space.position(y)
            tj = pos_in_supp.get(tk)
            if tj is not None and tj != j:
                adj[j].append(tj)
    return adj


def path_method_C0(
    net: SynapticNetwork, space: EnumeratedSpace, mu: StationaryDistribution
) -> PathMethodReport:
    """Evaluate the path-method constant and the firing-path diameter.

    Shortest firing sequences between all ordered support pairs are found by
    breadth-first search on the saturated jump graph; the maximum length
    certifies the uniform boundedness the constant relies on.
    """
    support = mu.support
    ns = len(support)
    min_mu = float(mu.probabilities[support].min())
    delta = float(net.intensity.delta)
    if ns <= 1:
        return PathMethodReport(
            c0=float("inf") if min_mu == 0 else net.n_neurons**2 / (2 * min_mu * delta),
            min_mu=min_mu,
            max_path_length=0,
            n_support=ns,
            degenerate=True,
        )
    c0 = net.n_neurons**2 / (2.0 * min_mu * delta)
    adj = _support_adjacency(net, space, support)
    max_len = 0
    disconnected = []
    for src in range(ns):
        dist = [-1] * ns
        dist[src] = 0
        queue = [src]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for dst in range(ns):
            if dist[dst] < 0:
                if len(disconnected) < 10:
                    disconnected.append(
                        (
                            space.states[int(support[src])].numerators,
                            space.states[int(support[dst])].numerators,
                        )
                    )
            else:
                max_len = max(max_len, dist[dst])
    return PathMethodReport(
        c0=c0,
        min_mu=min_mu,
        max_path_length=max_len,
        n_support=ns,
        disconnected_pairs=tuple(disconnected),
        degenerate=False,
    )


def measure_lyapunov_tail_constant(
    net: SynapticNetwork,
    space: EnumeratedSpace,
    gen: SparseGenerator,
    mu: StationaryDistribution,
    f_suite,
    inner_box: float,
) -> float:
    """Measured replacement for the imported drift-to-energy constant.

    The analytical route bounds mu(f^2 * (-LV/V) * 1 outside the inner box)
    by a multiple of the energy, but the multiple is never made explicit.
    This returns the largest such ratio over the supplied functions, using
    V = 1 + total potential and the untruncated generator for LV.
    """
    v_fun = lambda y: 1.0 + y.total()
    ratio = np.zeros(len(space))
    for k, x in enumerate(space.states):
        if x.total() > inner_box:
            lv = apply_generator(net, v_fun, x)
            ratio[k] = -lv / v_fun(x)
    p = mu.probabilities
    worst = 0.0
    for f in f_suite:
        f = np.asarray(f, dtype=float)
        energy = float(p @ gamma_vector(gen, f))
        if energy <= 0:
            continue
        num = float(p @ (f * f * ratio))
        worst = max(worst, num / energy)
    return worst


# -- carre-du-champ coefficients ----------------------------------------------

@dataclass(frozen=True)
class C3SumReport:
    """Exponential-moment coefficient for the summed-potential observable.

    Per neuron, the three competing terms are the second-moment expectation
    mu(phi_i x_i^2) + N0^2 mu(phi_i), the support maximum of phi_i x_i^2, and
    the one-jump worst case N0^2 phi(N0) e^{lambda N0}, with N0 the largest
    weight row sum. The total takes the per-neuron maximum and sums over
    neurons, which is conservative. Nondecreasing in lambda.
    """

    total: float
    n0: float
    per_neuron: tuple
    lam: float
    degenerate: bool


def compute_C3_sum_function(
    net: SynapticNetwork,
    space: EnumeratedSpace,
    mu: StationaryDistribution,
    lam: float,
) -> C3SumReport:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n0 = float(max(net.row_sums))
    coords = space.coordinate_values()
    p = mu.probabilities
    support = mu.support
    delta = float(net.intensity.delta)
    slope = float(net.intensity.slope)
    rows = []
    total = 0.0
    exp_term = math.inf if lam * n0 > 700 else math.exp(lam * n0)
    for i in range(net.n_neurons):
        phi_i = delta + slope * coords[i]
        t1 = float(p @ (phi_i * coords[i] ** 2) + n0**2 * (p @ phi_i))
        t2 = float((phi_i * coords[i] ** 2)[support].max())
        t3 = n0**2 * (delta + slope * n0) * exp_term
        rows.append({"moment": t1, "ess_sup": t2, "boundary": t3})
        total += max(t1, t2, t3)
    return C3SumReport(
        total=total,
        n0=n0,
        per_neuron=tuple(rows),
        lam=lam,
        degenerate=total == 0.0,
    )


@dataclass(frozen=True)
class C3GeneralReport:
    """Hypothesis check for general observables with bounded jump differences.

    ``h1``/``h2`` are the support maxima of phi_i * D^2 and
    phi_i * e^{lambda D} * D^2, with D the absolute one-firing difference of
    f. Both must be < 1; then the coefficient 3N applies. A violated
    hypothesis is reported explicitly, never papered over.
    """

    c3: float | None
    h1: float
    h2: float
    ok: bool
    violated: str | None


def compute_C3_general(
    net: SynapticNetwork,
    space: EnumeratedSpace,
    mu: StationaryDistribution,
    f,
    lam: float,
) -> C3GeneralReport:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    f = np.asarray(f, dtype=float)
    coords = space.coordinate_values()
    delta = float(net.intensity.delta)
    slope = float(net.intensity.slope)
    support = set(int(k) for k in mu.support)
    h1 = 0.0
    h2 = 0.0
    for k, x in enumerate(space.states):
        if k not in support:
            continue
        for i in range(net.n_neurons):
            y = saturate(jump_map(net, x, i), space.m_box)
            d = abs(f[space.position(y)] - f[k])
            phi_i = delta + slope * coords[i][k]
            h1 = max(h1, phi_i * d * d)
            grow = math.inf if lam * d > 700 else math.exp(lam * d)
            h2 = max(h2, phi_i * grow * d * d)
    ok = h1 < 1.0 and h2 < 1.0
    violated = None
    if h1 >= 1.0:
        violated = f"plain jump-difference hypothesis fails: {h1:.6g} >= 1"
    elif h2 >= 1.0:
        violated = f"exponential jump-difference hypothesis fails: {h2:.6g} >= 1"
    return C3GeneralReport(
        c3=3.0 * net.n_neurons if ok else None, h1=h1, h2=h2, ok=ok, violated=violated
    )


# -- admissible rate and product prefactor ------------------------------------

def lambda0_product(c0: float, c3: float, lam: float, tol: float = 1e-12) -> float:
    """Prefactor prod_k (1 - q/4^k)^{-2^k} with q = lam^2 c0 c3, in log space.

    The log-series terms decay geometrically (term_k <= (q / 2^k) / (1 - q)),
    so summation stops once that bound on the remaining tail drops below tol.
    Requires q < 1; the result is always >= 1.
    """
    q = lam * lam * c0 * c3
    if q < 0:
        raise ValueError("negative q; check the inputs")
    if q >= 1:
        raise ValueError(f"lambda^2*C0*C3 = {q:.6g} >= 1: outside the admissible regime")
    if q == 0:
        return 1.0
    log_sum = 0.0
    k = 0
    while True:
        log_sum += -(2.0**k) * math.log1p(-q / 4.0**k)
        k += 1
        if (q / (1.0 - q)) * 2.0 ** (1 - k) <= tol:
            break
    return math.exp(log_sum)


def solve_admissible_lambda(
    c0: float,
    c3_of_lambda,
    margin: float = 0.1,
    min_lambda: float = 1e-8,
    interval_tol: float = 1e-12,
):
    """Largest lambda with lambda^2 * c0 * c3(lambda) = 1 - margin, by bisection.

    c3_of_lambda must be nondecreasing, which makes the target function
    strictly increasing. Degenerate situations (no admissible lambda above
    min_lambda, or a coefficient that vanishes identically so every lambda is
    admissible) raise DegenerateModelError.
    """
    if not 0 < margin < 1:
        raise ValueError("margin must lie in (0, 1)")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    target = 1.0 - margin

    def g(lam: float) -> float:
        c3 = c3_of_lambda(lam)
        if not math.isfinite(c3):
            return math.inf
        return lam * lam * c0 * c3

    if g(min_lambda) >= target:
        raise DegenerateModelError(
            f"no admissible lambda above {min_lambda}: the coefficient is too large"
        )
    hi = 1.0
    for _ in range(200):
        if g(hi) >= target:
            break
        hi *= 2.0
    else:
        raise DegenerateModelError(
            "coefficient vanishes; every lambda is admissible (degenerate certificate)"
        )
    lo = 0.0
    while hi - lo > interval_tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class AdmissibleLambda:
    lam: float
    lam0: float
    c3: float
    q: float
    margin: float


def admissible_lambda(
    net: SynapticNetwork,
    space: EnumeratedSpace,
    mu: StationaryDistribution,
    c0: float,
    margin: float = 0.1,
    tol: float = 1e-12,
) -> AdmissibleLambda:
    """Admissible exponential rate for the summed-potential observable.

    The coefficient c3 itself grows with lambda through its boundary term, so
    the admissibility equation is solved by bisection; the returned rate
    satisfies lambda^2 * c0 * c3(lambda) = 1 - margin to bisection accuracy.
    """

    def c3_fn(lam: float) -> float:
        return compute_C3_sum_function(net, space, mu, lam).total

    if c3_fn(0.0) == 0.0:
        raise DegenerateModelError(
            "carre-du-champ coefficient is identically zero (no interaction); "
            "certificate degenerate"
        )
    lam = solve_admissible_lambda(c0, c3_fn, margin=margin)
    c3 = c3_fn(lam)
    q = lam * lam * c0 * c3
    lam0 = lambda0_product(c0, c3, lam, tol=tol)
    return AdmissibleLambda(lam=lam, lam0=lam0, c3=c3, q=q, margin=margin)


@dataclass(frozen=True)
class ConcentrationCertificate:
    """Everything needed to evaluate the certified exponential tail bound."""

    c0: float
    c0_source: str  # "spectral" or "path"
    c3: float
    n0: float
    lam: float
    lam0: float
    q: float
    margin: float


# -- certified tails ----------------------------------------------------------

@dataclass(frozen=True)
class TalagrandRow:
    r: float
    exact_tail: float
    bound: float
    centered_exact: float
    centered_bound: float
    ok: bool


@dataclass(frozen=True)
class TalagrandReport:
    rows: tuple
    passed: bool
    lam: float
    lam0: float
    mu_F: float


def talagrand_verdict(
    cert: ConcentrationCertificate,
    space: EnumeratedSpace,
    mu: StationaryDistribution,
    r_grid,
    f_values=None,
) -> TalagrandReport:
    """Certified vs exact tails of the summed potential under mu.

    For each r the certified bound is lam0 * e^{lam * mu(min(F, r))} *
    e^{-lam r}; the exact tail is read off the stationary vector. The row for
    the centered observable F - mu(F) is reported alongside. The verdict
    passes when the bound dominates the exact tail at every grid point.
    """
    f = space.totals() if f_values is None else np.asarray(f_values, dtype=float)
    p = mu.probabilities
    mu_f = float(p @ f)
    rows = []
    passed = True
    for r in r_grid:
        r = float(r)
        mu_fr = float(p @ np.minimum(f, r))
        bound = cert.lam0 * math.exp(cert.lam * mu_fr - cert.lam * r)
        exact = float(p[f >= r].sum())
        fc = f - mu_f
        mu_fcr = float(p @ np.minimum(fc, r))
        centered_bound = cert.lam0 * math.exp(cert.lam * mu_fcr - cert.lam * r)
        centered_exact = float(p[fc >= r].sum())
        ok = exact <= bound
        passed = passed and ok
        rows.append(
            TalagrandRow(
                r=r,
                exact_tail=exact,
                bound=bound,
                centered_exact=centered_exact,
                centered_bound=centered_bound,
                ok=ok,
            )
        )
    return TalagrandReport(rows=tuple(rows), passed=passed, lam=cert.lam, lam0=cert.lam0, mu_F=mu_f)


# -- weighted semigroup inequality, measured constants ------------------------

def max_peak_time(net: SynapticNetwork, space: EnumeratedSpace) -> float:
    """Largest one-jump-probability peak time over all (state, neuron) pairs."""
    worst = 0.0
    for x in space.states:
        for i in range(net.n_neurons):
            worst = max(worst, jump_window_probabilities(net, x, i, 0.0).t_peak)
    return worst


@dataclass(frozen=True)
class SemigroupReport:
    """Measured constants for the weighted variance inequality.

    ``d1_hat[t]`` is pinned by functions supported outside the enlarged inner
    box (their weighted term vanishes, so the energy term must carry them
    alone); ``d2_hat[t]`` is then the smallest coefficient covering the rest
    of the suite. Growth exponents are log-log regression slopes over the
    time grid; caps of 3 and 2 carry a 0.25 regression slack.
    """

    theta: float
    t0_max: float
    t1: float
    t_grid: tuple
    d1_hat: tuple
    d2_hat: tuple
    slope_d1: float | None
    slope_d2: float | None
    d1_cap_ok: bool
    d2_cap_ok: bool
    outside_term_max: float
    outside_one_term_ok: bool
    fit_violation: float
    n_suite: int
    n_outside: int
    inner_box: float
    enlarged_box: float

    @property
    def passed(self) -> bool:
        return (
            self.d1_cap_ok
            and self.d2_cap_ok
            and self.outside_one_term_ok
            and self.fit_violation <= 1e-9
        )


def make_function_suite(space: EnumeratedSpace, size: int, seed: int, enlarged_box: float):
    """Deterministic test functions: coordinates, total, random, and tail-only.

    Returns (functions, outside_indices). Roughly a fifth of the suite is
    supported strictly outside the enlarged inner box, which the measured-d1
    step requires; raises when the box holds no such states.
    """
    n = len(space)
    coords = space.coordinate_values()
    n_base = coords.shape[0] + 1
    n_outside = max(1, size // 5)
    if size < n_base + n_outside:
        raise ValueError(f"suite size {size} too small; need at least {n_base + n_outside}")
    outside_mask = np.array(
        [max(x.values()) > enlarged_box for x in space.states], dtype=float
    )
    if outside_mask.sum() == 0:
        raise ValueError(
            f"no states outside the enlarged inner box ({enlarged_box}); "
            f"enlarge m_box or shrink the inner fraction"
        )
    rng = np.random.default_rng(seed)
    suite = [coords[i].copy() for i in range(coords.shape[0])]
    suite.append(space.totals())
    while len(suite) < size - n_outside:
        suite.append(rng.standard_normal(n))
    outside_idx = []
    while len(suite) < size:
        outside_idx.append(len(suite))
        suite.append(rng.standard_normal(n) * outside_mask)
    return suite, outside_idx


def _loglog_slope(ts, ys):
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = ys > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(ts[keep]), np.log(ys[keep]), 1)[0])


def semigroup_poincare_report(
    net: SynapticNetwork,
    space: EnumeratedSpace,
    gen: SparseGenerator,
    mu: StationaryDistribution,
    t_grid=None,
    suite_size: int = 50,
    seed: int = 0,
    inner_frac: float = 0.5,
    eps: float = 1e-12,
) -> SemigroupReport:
    """Measure the smallest coefficient pair for the weighted inequality.

    The inner box D = {x_i <= inner_frac * m_box} localizes the weighted
    term. For every t in the grid (which must start at or above
    t1 = 1/delta + max peak time) the averaged variance of each suite
    function is compared against d1 * energy + d2 * weighted term, and the
    lexicographically smallest (d1, d2) covering the whole suite is recorded.
    """
    theta = (net.n_neurons * math.e) ** net.n_neurons
    t0_max = max_peak_time(net, space)
    t1 = 1.0 / float(net.intensity.delta) + t0_max
    if t_grid is None:
        t_grid = [t1, 2 * t1, 4 * t1, 8 * t1]
    t_grid = [float(t) for t in t_grid]
    below = [t for t in t_grid if t < t1 * (1 - 1e-12)]
    if below:
        raise ValueError(f"t values {below} lie below t1 = {t1}")

    inner_box = inner_frac * space.m_box
    max_w = max((max(row) for row in net.weights), default=0)
    enlarged = inner_box + float(max_w)
    indicator = np.array(
        [1.0 if max(x.values()) <= inner_box else 0.0 for x in space.states]
    )
    suite, outside_idx = make_function_suite(space, suite_size, seed, enlarged)
    inside_idx = [j for j in range(len(suite)) if j not in set(outside_idx)]

    p = mu.probabilities
    phibar = space.total_rates()
    gammas = [gamma_vector(gen, f) for f in suite]
    energies = np.array([float(p @ g) for g in gammas])

    d1_hat, d2_hat = [], []
    outside_term_max = 0.0
    outside_one_term_ok = True
    fit_violation = 0.0
    for t in t_grid:
        f_weight = weighted_F_vector(gen, phibar, t, eps)
        lhs = np.zeros(len(suite))
        wterm = np.zeros(len(suite))
        for j, f in enumerate(suite):
            ptf = propagate_function(gen, f, t, eps)
            ptf2 = propagate_function(gen, f * f, t, eps)
            lhs[j] = float(p @ (ptf2 - ptf**2))
            wterm[j] = float(p @ (f_weight * propagate_function(gen, gammas[j] * indicator, t, eps)))
        outside_term_max = max(outside_term_max, float(np.abs(wterm[outside_idx]).max()))
        d1 = 0.0
        for j in outside_idx:
            if energies[j] > 0:
                d1 = max(d1, lhs[j] / energies[j])
        d2 = 0.0
        for j in inside_idx:
            shortfall = lhs[j] - d1 * energies[j]
            if shortfall > 0 and wterm[j] > 0:
                d2 = max(d2, shortfall / wterm[j])
        for j in outside_idx:
            slack = lhs[j] - d1 * energies[j]
            if slack > 1e-9 * max(1.0, abs(lhs[j])):
                outside_one_term_ok = False
        resid = lhs - d1 * energies - d2 * wterm
        fit_violation = max(fit_violation, float(resid.max()))
        d1_hat.append(d1)
        d2_hat.append(d2)

    slope_d1 = _loglog_slope(t_grid, d1_hat)
    slope_d2 = _loglog_slope(t_grid, d2_hat)
    return SemigroupReport(
        theta=theta,
        t0_max=t0_max,
        t1=t1,
        t_grid=tuple(t_grid),
        d1_hat=tuple(d1_hat),
        d2_hat=tuple(d2_hat),
        slope_d1=slope_d1,
        slope_d2=slope_d2,
        d1_cap_ok=slope_d1 is None or slope_d1 <= 3.25,
        d2_cap_ok=slope_d2 is None or slope_d2 <= 2.25,
        outside_term_max=outside_term_max,
        outside_one_term_ok=outside_one_term_ok,
        fit_violation=fit_violation,
        n_suite=len(suite),
        n_outside=len(outside_idx),
        inner_box=inner_box,
        enlarged_box=enlarged,
    )
