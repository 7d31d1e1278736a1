"""Lower-bound machinery: confusing instances, inner values, characteristic time.

The alternating boundary is handled piece by piece. A *piece* is a pair of
policies ``(pi_star, pi)`` together with a rule for choosing the preference
``z``; for a fixed ``z`` the boundary ``{Mt : z' Mt (pi_star - pi) = 0}`` is a
hyperplane, so each piece is a convex subproblem and the inner value is the
minimum over pieces. The default pool built from an instance uses pure-arm
policies:

* ``dominance`` pieces ``(e_i, e_j)`` for every arm j outside the Pareto set,
  with ``i`` the front arm that dominates ``j`` by the widest scalarized
  margin; ``z`` is minimized over the cone (the cheapest way to make j
  undominated by i).
* ``separation`` pieces ``(e_i, e_j)`` for every front arm i and every other
  arm j; ``z`` is the cone direction along which i beats j the most, i.e.
  the last hyperplane j must cross to dominate i.

With one objective and ``C = R+`` both kinds reduce to the classical
best-arm-identification alternatives.

Preferences ``z`` are parameterized by coefficients on the generator simplex
and renormalized to unit Euclidean norm. Coefficients are floored at
``Z_FLOOR`` so that every component of ``z`` stays nonzero and the Gaussian
closed form for the confusing instance is defined.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog, minimize

from .divergence import RewardFamily, kl_scalar, kl_scalarized
from .errors import (DegenerateError, InputError, NumericalError,
                     SingularityError)
from .geometry import PreferenceCone, PreferenceVector
from .pareto import dominance_matrix, pareto_set

W_FLOOR = 1e-6
Z_FLOOR = 1e-6
TIE_TOL = 1e-10
VALUE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class Instance:
    """Ground-truth bandit problem: an L x K mean matrix plus its noise model."""

    means: np.ndarray
    family: RewardFamily
    bounds: tuple = None

    def __post_init__(self):
        M = np.array(self.means, dtype=float)
        if M.ndim == 1:
            M = M[None, :]
        if M.ndim != 2:
            raise InputError("means must be an L x K matrix")
        L, K = M.shape
        if K < 2 or L < 1:
            raise InputError(f"need K >= 2 arms and L >= 1 objectives, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise InputError("means must be finite")
        bounds = self.bounds
        if bounds is None:
            bounds = (float(M.min()), float(M.max()))
        lo, hi = (float(b) for b in bounds)
        if lo > hi or M.min() < lo - 1e-12 or M.max() > hi + 1e-12:
            raise InputError(f"means fall outside bounds [{lo}, {hi}]")
        if self.family.is_gaussian and len(self.family.sigma) != L:
            raise InputError(f"gaussian family needs {L} sigmas, got {len(self.family.sigma)}")
        M.setflags(write=False)
        object.__setattr__(self, "means", M)
        object.__setattr__(self, "bounds", (lo, hi))

    @property
    def num_objectives(self) -> int:
        return self.means.shape[0]

    @property
    def num_arms(self) -> int:
        return self.means.shape[1]

    def with_means(self, means) -> "Instance":
        M = np.asarray(means, dtype=float)
        lo, hi = self.bounds
        return Instance(M, self.family, (min(lo, M.min()), max(hi, M.max())))

    def to_dict(self) -> dict:
        d = {"means": self.means.tolist(), "family": self.family.kind,
             "bounds": list(self.bounds)}
        if self.family.is_gaussian:
            d["sigma"] = list(self.family.sigma)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        for key in ("means", "family"):
            if key not in data:
                raise InputError(f'instance is missing "{key}"')
        family = RewardFamily(data["family"], tuple(data.get("sigma", ())))
        bounds = data.get("bounds")
        return cls(np.asarray(data["means"], dtype=float), family,
                   tuple(bounds) if bounds is not None else None)


def load_instance(path) -> Instance:
    with open(Path(path)) as fh:
        return Instance.from_dict(json.load(fh))


def simplex_vector(x, size=None, name="weights") -> np.ndarray:
    """Validate a point of the probability simplex (policy or allocation)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (size is not None and x.shape[0] != size):
        raise InputError(f"{name} must be a vector of length {size}")
    if np.any(x < 0) or abs(x.sum() - 1) > 1e-12 * max(1, x.shape[0]):
        raise InputError(f"{name} must be nonnegative and sum to 1")
    return x


def pure_policy(K: int, k: int) -> np.ndarray:
    e = np.zeros(K)
    e[k] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class PolicyPair:
    """One piece of the alternating boundary."""

    pi_star: np.ndarray
    pi: np.ndarray
    kind: str = "dominance"
    arms: tuple = None

    @property
    def delta(self) -> np.ndarray:
        return self.pi_star - self.pi


@dataclass(frozen=True, eq=False)
class InnerSolution:
    value: float
    m_tilde: np.ndarray
    z: PreferenceVector
    pair: PolicyPair
    beta: float = float("nan")
    kl_per_arm: np.ndarray = None


@dataclass(frozen=True, eq=False)
class OracleSolution:
    characteristic_time: float
    allocation: np.ndarray
    worst_policy_pair: tuple
    minimizing_z: PreferenceVector
    confusing_instance: np.ndarray
    lagrange_beta: float
    inverse_time: float
    gap: float = 0.0
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "characteristic_time": self.characteristic_time,
            "inverse_time": self.inverse_time,
            "allocation": self.allocation.tolist(),
            "worst_policy_pair": [p.tolist() for p in self.worst_policy_pair],
            "minimizing_z": self.minimizing_z.coords.tolist(),
            "minimizing_z_coefficients": self.minimizing_z.cone_coefficients.tolist(),
            "confusing_instance": self.confusing_instance.tolist(),
            "lagrange_beta": self.lagrange_beta,
            "duality_gap": self.gap,
            "iterations": self.iterations,
        }


@dataclass(frozen=True, eq=False)
class ConvexHullRep:
    """Valid inequality ``gamma . vect(Mt) >= gamma_0`` for a disjunction of half-spaces."""

    gamma: np.ndarray
    gamma_0: float
    multipliers: np.ndarray
    cone_coefficients: np.ndarray
    shape: tuple = field(default=None)

    def contains(self, m_tilde, tol: float = 1e-12) -> bool:
        x = np.asarray(m_tilde, dtype=float).reshape(-1)
        return bool(self.gamma @ x >= self.gamma_0 - tol)


# ---------------------------------------------------------------------------
# policy pool


def _check_cone(instance: Instance, cone: PreferenceCone):
    if cone.dimension != instance.num_objectives:
        raise InputError(f"cone has L={cone.dimension}, instance has "
                         f"L={instance.num_objectives}")


def policy_pool(means, cone: PreferenceCone) -> list:
    """Default boundary pieces for a mean matrix (see module docstring)."""
    M = np.asarray(means, dtype=float)
    K = M.shape[1]
    dom = dominance_matrix(M, cone)
    front = tuple(int(k) for k in np.flatnonzero(~dom.any(axis=1)))
    V = cone.generators
    pieces = []
    for j in range(K):
        if j in front:
            continue
        best, best_gap = None, -math.inf
        for i in front:
            if dom[j, i]:
                gap = float(np.min(V @ (M[:, i] - M[:, j])))
                if gap > best_gap + TIE_TOL:
                    best, best_gap = i, gap
        if best is None:
            # dominated only through ties; fall back to any dominating arm
            best = int(np.flatnonzero(dom[j])[0])
        pieces.append(PolicyPair(pure_policy(K, best), pure_policy(K, j),
                                 "dominance", (best, j)))
    for i in front:
        for j in range(K):
            if j != i:
                pieces.append(PolicyPair(pure_policy(K, i), pure_policy(K, j),
                                         "separation", (i, j)))
    return pieces


def _pool_from_policies(pi_star, policies, K) -> list:
    pi_star = simplex_vector(pi_star, K, "pi_star")
    pieces = []
    for pi in policies:
        if isinstance(pi, PolicyPair):
            pieces.append(pi)
            continue
        pi = simplex_vector(pi, K, "policy")
        if np.allclose(pi, pi_star, atol=1e-12):
            continue
        pieces.append(PolicyPair(pi_star, pi, "dominance"))
    return pieces


# ---------------------------------------------------------------------------
# preference search


def _floored_alpha(G: int) -> np.ndarray:
    """Vertices of the floored generator simplex, one row per generator."""
    A = np.full((G, G), Z_FLOOR)
    np.fill_diagonal(A, 1.0 - (G - 1) * Z_FLOOR)
    return A


def _pref(cone: PreferenceCone, alpha) -> PreferenceVector:
    return PreferenceVector.from_coefficients(cone, alpha)


def _project_floored_simplex(a, floor):
    """Euclidean projection onto ``{a : a_i >= floor, sum a = 1}``."""
    n = a.shape[0]
    mass = 1.0 - n * floor
    y = a - floor
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - mass
    rho = np.nonzero(u * np.arange(1, n + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0) + floor


def _search_z(objective, cone: PreferenceCone, starts=8, iters=200, tol=1e-8, seed=0):
    """Minimize ``objective(alpha)`` over the floored generator simplex.

    Floored vertices and the centroid are always evaluated; projected gradient
    descent with finite-difference gradients then refines from several starts.
    Returns ``(best_alpha, best_value)``; infeasible points score ``inf``.
    """
    G = cone.generators.shape[0]

    def f(a):
        try:
            return objective(a)
        except InputError:
            return math.inf

    cands = list(_floored_alpha(G)) + [np.full(G, 1.0 / G)]
    best_a, best_v = None, math.inf
    for a in cands:
        v = f(a)
        if v < best_v - TIE_TOL * max(1.0, abs(best_v) if math.isfinite(best_v) else 1.0):
            best_a, best_v = a, v
    if G == 1:
        return best_a, best_v
    rng = np.random.default_rng(seed)
    inits = cands + [rng.dirichlet(np.ones(G)) for _ in range(max(0, starts - len(cands)))]
    for a in inits[:max(starts, 1)]:
        a = _project_floored_simplex(np.asarray(a, float), Z_FLOOR)
        v = f(a)
        if not math.isfinite(v):
            continue
        step = 0.1
        for _ in range(iters):
            h = 1e-7
            grad = np.array([(f(a + h * e) - v) / h for e in np.eye(G)])
            if not np.all(np.isfinite(grad)):
                break
            improved = False
            while step > 1e-12:
                cand = _project_floored_simplex(a - step * grad, Z_FLOOR)
                cv = f(cand)
                if cv < v - 1e-15:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            done = v - cv <= tol * max(1.0, abs(v))
            a, v = cand, cv
            step *= 2.0
            if done:
                break
        if v < best_v - TIE_TOL * max(1.0, abs(best_v)):
            best_a, best_v = a, v
    return best_a, best_v


# ---------------------------------------------------------------------------
# Gaussian closed forms


def confusing_instance_gaussian(instance: Instance, pi_star, pi, z, w):
    """Closest point of the boundary hyperplane ``z' Mt (pi_star - pi) = 0``.

    Returns ``(Mt, beta)`` where ``Mt[l, k] = M[l, k] - beta sigma_l^2
    (pi_star - pi)_k / (z_l w_k)`` and ``beta = z' M Delta / (tr(Sigma)
    |Delta|^2_{diag(1/w)})``.
    """
    if not instance.family.is_gaussian:
        raise InputError("closed-form confusing instance needs a gaussian family")
    K = instance.num_arms
    M = instance.means
    pi_star = simplex_vector(pi_star, K, "pi_star")
    pi = simplex_vector(pi, K, "pi")
    zc = np.asarray(getattr(z, "coords", z), dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != (K,) or np.any(w <= 0):
        raise InputError("allocation weights must all be positive")
    delta = pi_star - pi
    if not np.any(delta):
        return M.copy(), 0.0
    var = instance.family.variances
    active = np.abs(M @ delta) > 0
    if np.any((zc == 0) & active):
        raise SingularityError("zero preference component on an objective with a policy gap")
    if var.sum() == 0:
        raise SingularityError("noiseless instance: confusing instance is undefined")
    beta = float(zc @ M @ delta) / (var.sum() * float(np.sum(delta ** 2 / w)))
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(zc[:, None] != 0,
                         beta * var[:, None] * delta[None, :] / (zc[:, None] * w[None, :]),
                         0.0)
    return M - shift, beta


@functools.lru_cache(maxsize=64)
def _floored_vertices(cone: PreferenceCone) -> np.ndarray:
    """Unit preference vectors at the floored generator-simplex vertices."""
    Zf = np.array([_pref(cone, a).coords for a in _floored_alpha(cone.generators.shape[0])])
    Zf.setflags(write=False)
    return Zf


def _gaussian_piece_tables(M, var, cone, pieces):
    """Per piece: chosen z index into the floored vertices and the gap z' M Delta."""
    Zf = _floored_vertices(cone)
    D = np.array([p.delta for p in pieces])                # P x K
    S = Zf @ M @ D.T                                       # G x P
    zidx = np.empty(len(pieces), dtype=int)
    for n, p in enumerate(pieces):
        col = S[:, n]
        if p.kind == "separation":
            zidx[n] = int(np.argmax(col))
        else:
            zidx[n] = int(np.argmin(col))                  # first index on ties
    s = S[zidx, np.arange(len(pieces))]
    num = np.maximum(s, 0.0) ** 2
    tr = var.sum()
    if tr > 0:
        c = num / (2.0 * tr)
    else:
        c = np.where(num > 0, math.inf, 0.0)      # noiseless: any gap is decisive
    return Zf, D, zidx, s, c


class _GaussianPieces:
    """Vectorized Gaussian piece values ``c_p / |Delta_p|^2_{diag(1/w)}``."""

    def __init__(self, instance, cone, pieces):
        self.instance = instance
        self.cone = cone
        self.pieces = pieces
        self.var = instance.family.variances
        self.Zf, self.D, self.zidx, self.s, self.c = _gaussian_piece_tables(
            instance.means, self.var, cone, pieces)
        self.D2 = self.D ** 2

    def values(self, w):
        q = self.D2 @ (1.0 / w)
        return self.c / q

    def gradients(self, w):
        q = self.D2 @ (1.0 / w)
        with np.errstate(invalid="ignore"):
            g = (self.c / q ** 2)[:, None] * (self.D2 / (w ** 2)[None, :])
        # an infinite (noiseless) piece has no slope along arms it does not involve
        return np.where(self.D2 > 0, g, 0.0)

    def solution(self, w, n) -> InnerSolution:
        p = self.pieces[n]
        alpha = _floored_alpha(self.cone.generators.shape[0])[self.zidx[n]]
        z = _pref(self.cone, alpha)
        mt, beta = confusing_instance_gaussian(self.instance, p.pi_star, p.pi, z, w / w.sum())
        # confusing instance is scale-free in w; value uses the raw weights
        q = float(self.D2[n] @ (1.0 / w))
        value = float(self.c[n] / q)
        kl = self.gradients(w)[n]
        return InnerSolution(value, mt, z, p, beta, kl)


# ---------------------------------------------------------------------------
# generic (any family) piece solver


def _pair_min_kl(x, w, delta, family):
    """min over scalar y with sum(delta * y) = 0 of sum w_k kl(x_k, y_k)."""
    support = np.flatnonzero(delta)
    if float(delta @ x) <= 0:
        return 0.0, x.copy()
    if len(support) == 2 and abs(delta[support].sum()) < 1e-15:
        i, j = support
        m = (w[i] * x[i] + w[j] * x[j]) / (w[i] + w[j])
        y = x.copy()
        y[i] = y[j] = m
        return (w[i] * kl_scalar(family, x[i], m) + w[j] * kl_scalar(family, x[j], m)), y

    def obj(y):
        return sum(w[k] * kl_scalar(family, x[k], y[k]) for k in support)

    cons = {"type": "eq", "fun": lambda y: float(delta[support] @ y)}
    y0 = np.full(len(support), float(np.average(x[support], weights=w[support])))
    res = minimize(lambda y: obj(_embed(x, support, y)), y0, constraints=[cons],
                   method="SLSQP", options={"ftol": 1e-12, "maxiter": 200})
    if not res.success:
        raise NumericalError(f"inner minimization failed: {res.message}",
                             residual=float(abs(delta[support] @ res.x)), best=res.x)
    y = _embed(x, support, res.x)
    return float(res.fun), y


def _embed(x, support, ys):
    y = x.copy()
    y[support] = ys
    return y


def _generic_piece(instance, cone, piece, w):
    M = instance.means
    family = instance.family
    delta = piece.delta

    def value_at(alpha):
        z = _pref(cone, alpha).coords
        x = z @ M
        for v in x:
            kl_scalar(family, v, v)                       # domain check
        return _pair_min_kl(x, w, delta, family)[0]

    G = cone.generators.shape[0]
    if piece.kind == "separation":
        Zf = _floored_alpha(G)
        gaps = [float(_pref(cone, a).coords @ M @ delta) for a in Zf]
        alpha = Zf[int(np.argmax(gaps))]
        val = value_at(alpha)
    else:
        alpha, val = _search_z(value_at, cone)
        if alpha is None or not math.isfinite(val):
            raise NumericalError("no feasible preference vector for piece",
                                 residual=math.inf)
    z = _pref(cone, alpha)
    x = z.coords @ M
    _, y = _pair_min_kl(x, w, delta, family)
    # lift the scalar solution to a matrix: move each column along z
    mt = M + np.outer(z.coords, (y - x))
    kl = np.array([kl_scalarized(z.coords, M[:, k], mt[:, k], family)
                   for k in range(instance.num_arms)])
    return InnerSolution(float(w @ kl), mt, z, piece, float("nan"), kl)


# ---------------------------------------------------------------------------
# inner value


def _prepare(instance, cone, pi_star, policies):
    _check_cone(instance, cone)
    if policies is None:
        pieces = policy_pool(instance.means, cone)
    else:
        pieces = _pool_from_policies(pi_star, policies, instance.num_arms)
    if not pieces:
        raise DegenerateError("policy pool has no policy distinct from pi_star")
    return pieces


def _floor_weights(w, K):
    w = np.asarray(w, dtype=float)
    if w.shape != (K,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("weights must be a nonnegative vector of length K")
    return np.maximum(w, W_FLOOR)


class InnerProblem:
    """Inner minimization for a fixed instance and piece set, reusable across w."""

    def __init__(self, instance: Instance, cone: PreferenceCone, pi_star=None,
                 policies=None):
        self.instance = instance
        self.cone = cone
        self.pieces = _prepare(instance, cone, pi_star, policies)
        self._gauss = (_GaussianPieces(instance, cone, self.pieces)
                       if instance.family.is_gaussian else None)

    def piece_values(self, w):
        """Values and supergradients (per-arm KL at the minimizer) of every piece."""
        w = _floor_weights(w, self.instance.num_arms)
        if self._gauss is not None:
            return self._gauss.values(w), self._gauss.gradients(w)
        sols = [_generic_piece(self.instance, self.cone, p, w) for p in self.pieces]
        return (np.array([s.value for s in sols]),
                np.array([s.kl_per_arm for s in sols]))

    def solve(self, w) -> InnerSolution:
        w = _floor_weights(w, self.instance.num_arms)
        if self._gauss is not None:
            vals = self._gauss.values(w)
            n = _argmin_tie(vals)
            return self._gauss.solution(w, n)
        best = None
        for p in self.pieces:
            s = _generic_piece(self.instance, self.cone, p, w)
            if best is None or s.value < best.value - TIE_TOL * max(1.0, best.value):
                best = s
        return best

    def value(self, w) -> float:
        return float(np.min(self.piece_values(w)[0]))


def _argmin_tie(vals) -> int:
    m = float(np.min(vals))
    return int(np.flatnonzero(vals <= m + TIE_TOL * max(1.0, abs(m)))[0])


def inner_value(w, instance: Instance, cone: PreferenceCone, pi_star=None,
                policy_pool=None) -> InnerSolution:
    """Minimum weighted KL from ``instance`` to the alternating boundary.

    ``w`` may be an allocation or raw pull counts (the value is linear in w).
    Without ``policy_pool`` the default pieces of :func:`policy_pool` are used;
    otherwise every policy in the pool is paired with ``pi_star``.
    """
    return InnerProblem(instance, cone, pi_star, policy_pool).solve(w)


# ---------------------------------------------------------------------------
# outer maximization


def _kelley(problem: InnerProblem, starts=8, max_iter=200, tol=1e-8, seed=0,
            w0=None):
    """Maximize the concave inner value over the simplex by cutting planes.

    Every evaluated point contributes one linear upper bound per piece; the
    LP over the cuts yields an upper bound on the optimum and the best
    evaluated point a lower bound.
    """
    K = problem.instance.num_arms
    rng = np.random.default_rng(seed)
    points = [np.full(K, 1.0 / K)]
    if w0 is not None:
        points.append(np.asarray(w0, dtype=float))
    points += [rng.dirichlet(np.ones(K)) for _ in range(max(0, starts - len(points)))]
    cuts = []
    best_w, best_v = None, -math.inf
    upper = math.inf

    def evaluate(w):
        nonlocal best_w, best_v
        vals, grads = problem.piece_values(w)
        v = float(vals.min())
        if v > best_v:
            best_w, best_v = w.copy(), v
        cuts.extend(grads)

    for p in points:
        evaluate(np.maximum(p / p.sum(), W_FLOOR))
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_eq = np.ones((1, K + 1))
    A_eq[0, -1] = 0.0
    bounds = [(W_FLOOR, 1.0)] * K + [(0.0, None)]
    it = 0
    for it in range(1, max_iter + 1):
        G = np.asarray(cuts)
        A_ub = np.hstack([-G, np.ones((G.shape[0], 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(G.shape[0]), A_eq=A_eq, b_eq=[1.0],
                      bounds=bounds, method="highs")
        if res.status != 0:
            raise NumericalError(f"cutting-plane LP failed: {res.message}",
                                 residual=upper - best_v, best=best_w)
        upper = min(upper, float(-res.fun))
        if upper - best_v <= tol * max(best_v, VALUE_FLOOR):
            break
        evaluate(np.maximum(res.x[:K], W_FLOOR))
        if upper - best_v <= tol * max(best_v, VALUE_FLOOR):
            break
    else:
        if upper - best_v > 1e-4 * max(best_v, VALUE_FLOOR):
            raise NumericalError("characteristic time did not converge",
                                 residual=upper - best_v, best=best_w)
    return best_w / best_w.sum(), best_v, upper - best_v, it


def _lp_upper(cuts, K):
    """Optimum of the LP relaxation built from the given cuts."""
    G = np.asarray(cuts)
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_eq = np.ones((1, K + 1))
    A_eq[0, -1] = 0.0
    res = linprog(c, A_ub=np.hstack([-G, np.ones((G.shape[0], 1))]),
                  b_ub=np.zeros(G.shape[0]), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(W_FLOOR, 1.0)] * K + [(0.0, None)], method="highs")
    return float(-res.fun) if res.status == 0 else math.inf


def _smooth_gaussian(problem: InnerProblem, w0=None, tol=1e-8):
    """Epigraph form ``max t s.t. c_p >= t |Delta_p|^2_{diag(1/w)}`` by SLSQP.

    The Gaussian pieces are smooth in w, so a quasi-Newton SQP step converges
    far faster than cutting planes. The result is certified by the LP over
    the supergradients at the returned point; ``None`` if it fails.
    """
    g = problem._gauss
    K = problem.instance.num_arms
    x0 = np.append(np.full(K, 1.0 / K) if w0 is None else np.maximum(w0, W_FLOOR), 0.0)
    x0[:K] /= x0[:K].sum()
    scale = float(np.min(g.values(x0[:K])))
    if not 0 < scale < math.inf:
        return None
    # work with t / scale so the epigraph variable is O(1)
    C, D2 = g.c / scale, g.D2
    x0[-1] = 1.0

    def cons(x):
        return C - x[-1] * (D2 @ (1.0 / x[:K]))

    def cons_jac(x):
        w = x[:K]
        J = np.empty((C.shape[0], K + 1))
        J[:, :K] = x[-1] * D2 / w ** 2
        J[:, -1] = -(D2 @ (1.0 / w))
        return J

    obj_jac = np.append(np.zeros(K), -1.0)
    with warnings.catch_warnings():
        # SLSQP clips trial points to the bounds and warns each time
        warnings.simplefilter("ignore", RuntimeWarning)
        res = _slsqp(x0, obj_jac, cons, cons_jac, K)
    w = np.maximum(res.x[:K], W_FLOOR)
    w = w / w.sum()
    v = float(np.min(g.values(w)))
    gap = _lp_upper(g.gradients(w), K) - v
    if not gap <= tol * max(v, VALUE_FLOOR):
        return None
    return w, v, max(gap, 0.0), int(res.nit)


def _slsqp(x0, obj_jac, cons, cons_jac, K):
    return minimize(lambda x: -x[-1], x0, jac=lambda x: obj_jac, method="SLSQP",
                    constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac},
                                 {"type": "eq", "fun": lambda x: x[:K].sum() - 1.0,
                                  "jac": lambda x: np.append(np.ones(K), 0.0)}],
                    bounds=[(W_FLOOR, 1.0)] * K + [(0.0, None)],
                    options={"ftol": 1e-15, "maxiter": 500})


ACCEPT_TOL = 1e-6


def _maximize(problem: InnerProblem, tol=1e-8, max_iter=200, w0=None):
    """Gaussian: SLSQP with up to three warm restarts, accepting a certified
    relative gap of ``tol`` (or ``ACCEPT_TOL`` after the restarts). Other
    families, or a failed certificate: cutting planes."""
    if problem._gauss is not None:
        w, loose = w0, None
        for _ in range(3):
            out = _smooth_gaussian(problem, w0=w, tol=ACCEPT_TOL)
            if out is None:
                break
            w = out[0]
            if out[2] <= tol * max(out[1], VALUE_FLOOR):
                return out
            loose = out
        if loose is not None:
            return loose
    return _kelley(problem, max_iter=max_iter, tol=tol, w0=w0)


def optimal_allocation(instance: Instance, cone: PreferenceCone, tol=1e-8,
                       max_iter=200, w0=None, problem=None):
    """``(w, value)`` maximizing the inner value over the allocation simplex."""
    problem = problem or InnerProblem(instance, cone)
    w, v, _, _ = _maximize(problem, tol=tol, max_iter=max_iter, w0=w0)
    return w, v


def characteristic_time(instance: Instance, cone: PreferenceCone, tol=1e-8,
                        max_iter=200) -> OracleSolution:
    problem = InnerProblem(instance, cone)
    w, v, gap, iters = _maximize(problem, tol=tol, max_iter=max_iter)
    if v < VALUE_FLOOR:
        raise DegenerateError("inner value is zero: instance has indistinguishable policies")
    sol = problem.solve(w)
    return OracleSolution(
        characteristic_time=1.0 / v,
        allocation=w,
        worst_policy_pair=(sol.pair.pi_star.copy(), sol.pair.pi.copy()),
        minimizing_z=sol.z,
        confusing_instance=sol.m_tilde,
        lagrange_beta=sol.beta,
        inverse_time=v,
        gap=gap,
        iterations=iters,
    )


def gaussian_closed_form_inverse_time(instance: Instance, cone: PreferenceCone,
                                      policy_pool=None, pi_star=None,
                                      return_argmin=False):
    """``inf (z' M Delta)^2 / (2 tr(Sigma) |Delta|_2^2)`` over neighbour pieces and unit z.

    Neighbours default to the dominance pieces of the instance. The linear
    form ``z' M Delta`` is extremal on generators, so a sign change across
    generators means some unit ``z`` in the cone zeroes it.
    """
    if not instance.family.is_gaussian:
        raise InputError("closed form needs a gaussian family")
    _check_cone(instance, cone)
    if policy_pool is None:
        pieces = [p for p in globals()["policy_pool"](instance.means, cone)
                  if p.kind == "dominance"]
    else:
        pieces = _pool_from_policies(pi_star, policy_pool, instance.num_arms)
    tr = instance.family.variances.sum()
    V = cone.generators
    best = (math.inf, None, None)
    for p in pieces:
        d = p.delta
        g = instance.means @ d
        s = V @ g
        if s.min() <= 0 <= s.max():
            # interpolate between generators of opposite sign
            i, j = int(np.argmin(s)), int(np.argmax(s))
            if s[i] == 0:
                z = V[i]
            else:
                t = s[j] / (s[j] - s[i])
                z = t * V[i] + (1 - t) * V[j]
                z = z / np.linalg.norm(z)
            val = 0.0
        else:
            i = int(np.argmin(np.abs(s)))
            z, val = V[i], float(s[i] ** 2 / (2 * tr * float(d @ d)))
        if val < best[0] - TIE_TOL * max(1.0, abs(best[0]) if math.isfinite(best[0]) else 1.0):
            best = (val, p, z)
    if return_argmin:
        return best
    return best[0]


# ---------------------------------------------------------------------------
# alternating set and convex hull


def in_alternating_set(m_tilde, pi_star, cone: PreferenceCone, policy_pool,
                       tol: float = 1e-12) -> bool:
    """Whether some pool policy beats ``pi_star`` on ``m_tilde`` for some z in C.

    ``z' Mt (pi - pi_star)`` is linear in z, so its supremum over the cone is
    positive exactly when it is positive on some generator.
    """
    Mt = np.asarray(m_tilde, dtype=float)
    if Mt.ndim == 1:
        Mt = Mt[None, :]
    K = Mt.shape[1]
    pieces = _pool_from_policies(pi_star, policy_pool, K)
    V = cone.generators
    for p in pieces:
        if np.max(V @ Mt @ (p.pi - p.pi_star)) > tol:
            return True
    return False


def convex_hull_rep(pi_star, policy_pool, cone: PreferenceCone, z_coeffs,
                    shape=None, multipliers=None) -> ConvexHullRep:
    """Disjunctive-programming description of the hull of the pool's half-spaces.

    Each pool policy contributes the half-space ``a_h . vect(Mt) >= 0`` with
    ``a_h = vect(z (pi_h - pi_star)')`` and ``z = sum_i alpha_i v_i``. A valid
    inequality ``gamma . x >= gamma_0`` for the hull needs ``gamma = u_h a_h``
    and ``gamma_0 <= 0`` for every disjunct; a nonzero ``gamma`` exists only
    when all ``a_h`` point the same way.

    Raises:
        DegenerateError: all-zero ``gamma`` (the hull is the whole space).
    """
    alpha = np.asarray(z_coeffs, dtype=float)
    if alpha.shape != (cone.generators.shape[0],) or np.any(alpha < 0):
        raise InputError("z_coeffs must be nonnegative, one per generator")
    z = alpha @ cone.generators
    pi_star = np.asarray(pi_star, dtype=float)
    K = pi_star.shape[0]
    pis = [np.asarray(p.pi if isinstance(p, PolicyPair) else p, dtype=float)
           for p in policy_pool]
    if not pis:
        raise InputError("policy pool is empty")
    normals = [np.outer(z, pi - pi_star).reshape(-1) for pi in pis]
    if multipliers is not None:
        u = np.asarray(multipliers, dtype=float)
        if u.shape != (len(pis),) or np.any(u < 0):
            raise InputError("need one nonnegative multiplier per pool policy")
        if not np.any(u):
            raise DegenerateError("all multipliers are zero")
    ref = next((a for a in normals if np.linalg.norm(a) > 1e-15), None)
    if ref is None:
        raise DegenerateError("every disjunct has a zero normal")
    gamma = ref / np.linalg.norm(ref)
    u_fit = np.empty(len(pis))
    for h, a in enumerate(normals):
        na = np.linalg.norm(a)
        if na <= 1e-15 or np.linalg.norm(a / na - gamma) > 1e-9:
            raise DegenerateError(
                f"disjunct {h} is not parallel to the others: hull is the whole space")
        u_fit[h] = 1.0 / na
    if multipliers is not None:
        # gamma is fixed up to scale by the first positive multiplier
        h0 = int(np.flatnonzero(u)[0])
        gamma = u[h0] * normals[h0]
        if not np.allclose([u[h] * normals[h] for h in range(len(pis))], gamma,
                           atol=1e-10):
            raise InputError("multipliers do not give a common gamma")
        u_fit = u
    return ConvexHullRep(gamma, 0.0, u_fit, alpha,
                         shape or (z.shape[0], K))


# ---------------------------------------------------------------------------
# continuity


def continuity_probe(instance: Instance, cone: PreferenceCone, epsilons,
                     n_directions: int = 16, seed: int = 0) -> list:
    """Median change of the inner value (at the optimal allocation of the
    unperturbed instance) and of the characteristic time under perturbations
    ``M + eps E`` with random unit-Frobenius ``E``.

    Returns one dict per epsilon with keys ``epsilon``, ``median_dV``,
    ``median_dT``, ``support_unchanged`` (fraction of directions whose
    optimal-allocation support, weights above 1e-3, is unchanged).
    """
    eps = [float(e) for e in epsilons]
    if any(e < 0 for e in eps):
        raise InputError("epsilons must be nonnegative")
    base = characteristic_time(instance, cone)
    w = base.allocation
    v0 = base.inverse_time
    t0 = base.characteristic_time
    supp0 = tuple(np.flatnonzero(w > 1e-3))
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(n_directions):
        E = rng.standard_normal(instance.means.shape)
        dirs.append(E / np.linalg.norm(E))
    rows = []
    for e in eps:
        dv, dt, same = [], [], 0
        for E in dirs:
            if e == 0:
                dv.append(0.0)
                dt.append(0.0)
                same += 1
                continue
            pert = instance.with_means(instance.means + e * E)
            dv.append(abs(InnerProblem(pert, cone).value(w) - v0))
            sol = characteristic_time(pert, cone)
            dt.append(abs(sol.characteristic_time - t0))
            same += tuple(np.flatnonzero(sol.allocation > 1e-3)) == supp0
        rows.append({"epsilon": e, "median_dV": float(np.median(dv)),
                     "median_dT": float(np.median(dt)),
                     "support_unchanged": same / len(dirs)})
    return rows
