"""Stopping thresholds, pairwise confidence radii and Monte Carlo checks of the
tail bounds they rely on."""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import InputError
from .geometry import PreferenceVector
from .seeding import derive_seed

ZETA2 = math.pi ** 2 / 6
CI_LEVEL = 0.99


@dataclass(frozen=True)
class ThresholdParams:
    delta: float
    num_arms: int
    zeta2: float = ZETA2

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.num_arms < 1:
            raise InputError("num_arms must be positive")
        if abs(self.zeta2 - ZETA2) > 1e-12:
            raise InputError("zeta2 must equal pi^2 / 6")


@dataclass(frozen=True)
class PairwiseRadius:
    value: float
    z_norm_1: float
    counts: tuple


# ---------------------------------------------------------------------------
# calibration functions


def calibration_h(u: float) -> float:
    """``h(u) = u - ln u`` on ``u >= 1``."""
    if not u >= 1:
        raise InputError(f"h is defined for u >= 1, got {u}")
    return u - math.log(u)


def calibration_h_inverse(y: float, tol: float = 1e-12) -> float:
    """Inverse of ``h`` on its increasing branch ``[1, inf)``.

    Newton steps on ``u - ln u - y`` kept inside a shrinking bisection
    bracket, so the iteration cannot leave ``[1, inf)`` near the flat point
    ``u = 1``.
    """
    if not y >= 1:
        raise InputError(f"h^-1 is defined for y >= 1, got {y}")
    if y == 1:
        return 1.0
    lo, hi = 1.0, y + math.log(y) + 1.0
    while hi - math.log(hi) < y:
        hi *= 2
    u = y + math.log(y)
    for _ in range(200):
        f = u - math.log(u) - y
        if f > 0:
            hi = u
        else:
            lo = u
        fp = 1.0 - 1.0 / u
        nxt = u - f / fp if fp > 0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= tol * max(1.0, u):
            return nxt
        u = nxt
    return u


def calibration_h_tilde(z_param: float, x: float) -> float:
    """Two-branch ``h~_z``: linear in x below ``h^-1(1 / ln z)``, else via ``h^-1``."""
    if not 1 <= z_param <= math.e:
        raise InputError(f"z must lie in [1, e], got {z_param}")
    if not x >= 0:
        raise InputError(f"x must be nonnegative, got {x}")
    if z_param == 1:
        return math.inf
    lnz = math.log(z_param)
    if x >= calibration_h_inverse(1.0 / lnz):
        u = calibration_h_inverse(x)
        return math.exp(1.0 / u) * u
    return z_param * (x - math.log(lnz))


@functools.lru_cache(maxsize=256)
def calibration_T(x: float, zeta2: float = ZETA2) -> float:
    """``T(x) = 2 h~_{3/2}((h^-1(1 + x) + ln(2 zeta(2))) / 2)``."""
    if not x >= 0:
        raise InputError(f"x must be nonnegative, got {x}")
    inner = (calibration_h_inverse(1.0 + x) + math.log(2 * zeta2)) / 2
    return 2 * calibration_h_tilde(1.5, inner)


def threshold_beta(counts, params: ThresholdParams) -> float:
    """``sum_k 3 ln(1 + ln N_k) + K T(ln(1/delta) / K)`` summed over all arms."""
    n = np.asarray(counts, dtype=float)
    if n.ndim != 1 or n.shape[0] != params.num_arms:
        raise InputError(f"expected {params.num_arms} counts")
    if np.any(n < 1):
        raise InputError("threshold needs at least one pull per arm")
    K = params.num_arms
    return (float(np.sum(3 * np.log1p(np.log(n))))
            + K * calibration_T(math.log(1 / params.delta) / K, params.zeta2))


def _radius_h(x):
    return x + np.log1p(x)


def _z_l1(z) -> float:
    zc = np.asarray(getattr(z, "coords", z), dtype=float)
    return float(np.sum(np.abs(zc)))


def pairwise_radius_sq(n_i, n_j, z_norm_1, delta, K):
    """Vectorized ``beta_ij^2``; counts may be arrays."""
    k1 = K * (K - 1) / 2
    n_i = np.asarray(n_i, dtype=float)
    n_j = np.asarray(n_j, dtype=float)
    log_term = (_radius_h(math.log(k1 / delta) / 2)
                + np.log(4 + np.log(n_i)) + np.log(4 + np.log(n_j)))
    return 4 * z_norm_1 ** 2 * log_term * (1 / n_i + 1 / n_j)


def pairwise_radius(n_i: int, n_j: int, z, delta: float, K: int) -> PairwiseRadius:
    if n_i < 1 or n_j < 1:
        raise InputError("counts must be at least 1")
    if not 0 < delta <= 1:
        raise InputError("delta must lie in (0, 1]")
    if K < 2:
        raise InputError("need at least two arms")
    l1 = _z_l1(z)
    val = math.sqrt(float(pairwise_radius_sq(n_i, n_j, l1, delta, K)))
    return PairwiseRadius(val, l1, (int(n_i), int(n_j)))


# ---------------------------------------------------------------------------
# Monte Carlo validators


def _clopper_pearson(x: int, n: int, level: float = CI_LEVEL):
    """One-sided Clopper-Pearson bounds at the given level."""
    lo = 0.0 if x == 0 else float(beta_dist.ppf(1 - level, x, n - x + 1))
    hi = 1.0 if x == n else float(beta_dist.ppf(level, x + 1, n - x))
    return lo, hi


def _chunks(total, size):
    out, start = [], 0
    while start < total:
        out.append(min(size, total - start))
        start += size
    return out


def _run_chunks(fn, args_list, jobs):
    if jobs and jobs > 1 and len(args_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, *zip(*args_list)))
    return [fn(*a) for a in args_list]


def _gaussian_setup(instance, z):
    if not instance.family.is_gaussian:
        raise InputError("Monte Carlo validators need a gaussian instance")
    zc = np.asarray(getattr(z, "coords", z), dtype=float)
    if zc.shape != (instance.num_objectives,):
        raise InputError("z has the wrong dimension")
    proj_means = zc @ instance.means
    proj_sd = math.sqrt(float(zc @ (instance.family.variances * zc)))
    if proj_sd <= 0:
        raise InputError("projected noise has zero variance")
    return zc, proj_means, proj_sd


def _thm5_chunk(seed, reps, t, means, cov_sd, z, rhos):
    """Tail counts ``#{S >= rho}`` for one chunk of replications.

    Arms are pulled uniformly at random; the empirical mean of every arm is
    drawn from its exact sampling distribution given the counts.
    """
    rng = np.random.default_rng(seed)
    L, K = means.shape
    counts = rng.multinomial(t, np.full(K, 1.0 / K), size=reps)          # reps x K
    safe = np.maximum(counts, 1)
    noise = rng.standard_normal((reps, L, K)) * (cov_sd[None, :, None]
                                                 / np.sqrt(safe)[:, None, :])
    proj_err = np.einsum("l,rlk->rk", z, noise)                         # z'(Mhat - M)
    var = float(z @ (cov_sd ** 2 * z))
    stat = np.sum(np.where(counts > 0, counts * proj_err ** 2 / (2 * var), 0.0), axis=1)
    return [int(np.sum(stat >= r)) for r in rhos]


def thm5_bounds(rho: float, t: int, K: int):
    """Tail bound with the tighter and the looser polynomial factor, in that order."""
    c = math.ceil(rho * math.log(t))
    common = math.exp(-rho + K + 1)
    return common * (c / K) ** K, common * (rho * c / K) ** K


def tail_bound_check_thm5(instance, z, rho_grid, t: int, replications: int,
                          seed: int = 0, jobs: int = 1, chunk: int = 20000) -> list:
    """Monte Carlo estimate of ``P[sum_k N_k kl(z'Mhat_k, z'M_k) >= rho]``.

    ``kl`` is the Gaussian KL of the projected reward ``z'R`` (variance
    ``z' Sigma z``). One row per rho with keys ``rho, empirical, bound,
    bound_statement, bound_proof, ci_low, ci_high, verdict``. The verdict is
    checked against the looser of the two bound forms: ``vacuous`` when it is
    at least 1, ``violation`` when the lower confidence bound exceeds it,
    ``pass`` otherwise. ``verdict_statement`` applies the same rule to the
    tighter statement form.
    """
    if t < 1 or replications < 1:
        raise InputError("t and replications must be positive")
    zc, _, _ = _gaussian_setup(instance, z)
    rhos = [float(r) for r in rho_grid]
    sizes = _chunks(replications, chunk)
    sd = np.asarray(instance.family.sigma, dtype=float)
    args = [(derive_seed(seed, i), n, t, instance.means, sd, zc, rhos)
            for i, n in enumerate(sizes)]
    hits = np.sum(_run_chunks(_thm5_chunk, args, jobs), axis=0)
    K = instance.num_arms
    rows = []
    for rho, x in zip(rhos, hits):
        x = int(x)
        stmt, proof = thm5_bounds(rho, t, K)
        bound = max(stmt, proof)
        lo, hi = _clopper_pearson(x, replications)

        def verdict(b):
            if b >= 1:
                return "vacuous"
            return "violation" if lo > b else "pass"

        rows.append({"rho": rho, "empirical": x / replications, "bound": bound,
                     "bound_statement": stmt, "bound_proof": proof,
                     "ci_low": lo, "ci_high": hi, "verdict": verdict(bound),
                     "verdict_statement": verdict(stmt)})
    return rows


def _thm6_chunk(seed, reps, horizon, proj_means, proj_sd, z_l1, deltas, K):
    """Per delta, number of replications with at least one radius violation."""
    rng = np.random.default_rng(seed)
    arms = rng.integers(K, size=(reps, horizon))
    x = proj_means[arms] + proj_sd * rng.standard_normal((reps, horizon))
    counts, means = [], []
    for k in range(K):
        hit = arms == k
        c = np.cumsum(hit, axis=1)
        s = np.cumsum(np.where(hit, x, 0.0), axis=1)
        counts.append(c)
        with np.errstate(invalid="ignore", divide="ignore"):
            means.append(s / c)
    bad = np.zeros((len(deltas), reps), dtype=bool)
    for i in range(K):
        for j in range(i + 1, K):
            ok = (counts[i] > 0) & (counts[j] > 0)
            ni = np.where(ok, counts[i], 1)
            nj = np.where(ok, counts[j], 1)
            dev = np.abs(np.where(ok, means[i] - means[j], 0.0)
                         - (proj_means[i] - proj_means[j]))
            for d, delta in enumerate(deltas):
                rad2 = pairwise_radius_sq(ni, nj, z_l1, delta, K)
                bad[d] |= np.any(ok & (dev ** 2 > rad2), axis=1)
    return bad.sum(axis=1).tolist()


def coverage_check_thm6(instance, z, delta, horizon: int, replications: int,
                        seed: int = 0, jobs: int = 1, chunk: int = 200):
    """Fraction of sample paths on which some pair leaves its radius at some time.

    Arms are sampled uniformly. ``delta`` may be a single value (returns one
    report dict) or a list (one report per value, all on the same paths).
    Report keys: ``delta, horizon, replications, violations, fraction,
    limit, verdict`` with ``limit = delta + 2 sqrt(delta (1 - delta) / n)``.
    """
    single = np.isscalar(delta)
    deltas = [float(delta)] if single else [float(d) for d in delta]
    if any(not 0 < d < 1 for d in deltas):
        raise InputError("delta must lie in (0, 1)")
    if horizon < 1 or replications < 1:
        raise InputError("horizon and replications must be positive")
    zc, pm, psd = _gaussian_setup(instance, z)
    l1 = float(np.sum(np.abs(zc)))
    K = instance.num_arms
    args = [(derive_seed(seed, i), n, horizon, pm, psd, l1, deltas, K)
            for i, n in enumerate(_chunks(replications, chunk))]
    totals = np.sum(_run_chunks(_thm6_chunk, args, jobs), axis=0)
    reports = []
    for d, v in zip(deltas, totals):
        frac = int(v) / replications
        limit = d + 2 * math.sqrt(d * (1 - d) / replications)
        reports.append({"delta": d, "horizon": horizon, "replications": replications,
                        "violations": int(v), "fraction": frac, "limit": limit,
                        "verdict": "pass" if frac <= limit else "violation"})
    return reports[0] if single else reports


def as_preference(z, cone) -> PreferenceVector:
    """Accept a PreferenceVector or raw coordinates lying in ``cone``."""
    if isinstance(z, PreferenceVector):
        return z
    zc = np.asarray(z, dtype=float)
    from scipy.optimize import nnls
    alpha, res = nnls(cone.generators.T, zc)
    if res > 1e-9 * max(1.0, np.linalg.norm(zc)):
        raise InputError("z is not in the cone")
    return PreferenceVector(zc, alpha)
