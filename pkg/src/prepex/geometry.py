"""Polyhedral preference cones.

A cone is stored in both representations: the half-space matrix ``A`` with
``C = {x : A x >= 0}`` and the list of extreme rays (generators). Whichever
one the caller does not supply is synthesized by brute-force enumeration over
subsets of ``L - 1`` tight constraints, which is cheap for ``L <= 6``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from .errors import ConeError, InputError, NumericalError

MAX_DIM = 6
MEMBERSHIP_TOL = 1e-9
STRICT_TOL = 1e-9
_NORM_TOL = 1e-12
_RAY_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PreferenceCone:
    """Closed, pointed, solid polyhedral cone in R^L.

    Attributes:
        halfspace_matrix: (N, L) array of unit-norm rows ``a_i``.
        generators: (G, L) array of unit-norm extreme rays ``v_i``.
    """

    halfspace_matrix: np.ndarray
    generators: np.ndarray

    @property
    def dimension(self) -> int:
        return self.halfspace_matrix.shape[1]

    def __repr__(self):
        return (f"PreferenceCone(L={self.dimension}, "
                f"rows={self.halfspace_matrix.shape[0]}, "
                f"generators={self.generators.shape[0]})")

    def to_dict(self) -> dict:
        return {"halfspaces": self.halfspace_matrix.tolist(),
                "generators": self.generators.tolist()}


@dataclass(frozen=True, eq=False)
class PreferenceVector:
    """A preference ``z`` in the cone with its generator coefficients."""

    coords: np.ndarray
    cone_coefficients: np.ndarray

    @classmethod
    def from_coefficients(cls, cone: PreferenceCone, alpha, normalize=True):
        """Build ``z = sum_i alpha_i v_i``, optionally rescaled to unit norm."""
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (cone.generators.shape[0],):
            raise InputError(
                f"expected {cone.generators.shape[0]} cone coefficients, "
                f"got shape {alpha.shape}")
        if np.any(alpha < 0):
            raise InputError("cone coefficients must be nonnegative")
        z = alpha @ cone.generators
        if normalize:
            nz = np.linalg.norm(z)
            if nz == 0:
                raise InputError("zero preference vector")
            z = z / nz
            alpha = alpha / nz
        return cls(_frozen(z), _frozen(alpha))


def _normalize_rows(rows, what):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0:
        raise ConeError(f"{what}: empty representation")
    if not np.all(np.isfinite(rows)):
        raise ConeError(f"{what}: non-finite entries")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms < _NORM_TOL):
        raise ConeError(f"{what}: zero row")
    return rows / norms[:, None]


def _dedupe(rows, tol=1e-9):
    out = []
    for r in rows:
        if not any(np.linalg.norm(r - o) < tol for o in out):
            out.append(r)
    return np.array(out)


def _tight_directions(rows, dim):
    """Unit vectors orthogonal to some (dim-1)-subset of ``rows`` of full rank."""
    found = []
    for subset in itertools.combinations(range(rows.shape[0]), dim - 1):
        sub = rows[list(subset)].reshape(len(subset), dim)
        if np.linalg.matrix_rank(sub, tol=1e-9) < dim - 1:
            continue
        if len(subset) == 0:
            basis = np.eye(dim)
        else:
            _, _, vt = np.linalg.svd(sub)
            basis = vt[dim - 1:]
        found.append(basis[0])
    return found


def extreme_rays(halfspaces: np.ndarray) -> np.ndarray:
    """Extreme rays of ``{x : A x >= 0}`` (unit norm, lexicographically sorted)."""
    dim = halfspaces.shape[1]
    rays = []
    for d in _tight_directions(halfspaces, dim):
        for s in (1.0, -1.0):
            r = s * d
            if np.all(halfspaces @ r >= -_RAY_TOL):
                rays.append(r / np.linalg.norm(r))
    if not rays:
        return np.zeros((0, dim))
    rays = _dedupe(rays)
    rays[np.abs(rays) < 1e-15] = 0.0
    order = sorted(range(len(rays)), key=lambda i: tuple(-rays[i]))
    return rays[order]


def facet_normals(generators: np.ndarray) -> np.ndarray:
    """Unit inner facet normals of the cone spanned by ``generators``."""
    dim = generators.shape[1]
    normals = []
    for d in _tight_directions(generators, dim):
        for s in (1.0, -1.0):
            n = s * d
            if np.all(generators @ n >= -_RAY_TOL):
                normals.append(n / np.linalg.norm(n))
    if not normals:
        return np.zeros((0, dim))
    normals = _dedupe(normals)
    normals[np.abs(normals) < 1e-15] = 0.0
    return normals


def _validate(A, V):
    dim = A.shape[1]
    if V.shape[0] == 0 or np.linalg.matrix_rank(V, tol=1e-9) < dim:
        raise ConeError("empty interior: generators do not span R^L")
    if np.linalg.matrix_rank(A, tol=1e-9) < dim:
        raise ConeError("non-pointed cone: half-space matrix has rank < L")
    if np.any(A @ V.T < -_NORM_TOL * 10):
        raise ConeError("generator violates a half-space inequality")
    # pointed: no v != 0 with both v and -v among the cone's rays
    for v in V:
        if np.all(A @ -v >= -1e-9):
            raise ConeError("non-pointed cone: contains a line")
    if not np.all(np.abs(np.linalg.norm(A, axis=1) - 1) < _NORM_TOL):
        raise ConeError("half-space rows must have unit norm")
    if not np.all(np.abs(np.linalg.norm(V, axis=1) - 1) < _NORM_TOL):
        raise ConeError("generators must have unit norm")


def build_cone(halfspaces=None, generators=None) -> PreferenceCone:
    """Construct a cone from either representation (or both).

    Raises:
        ConeError: naming the violated invariant (rank deficiency, redundant
            or duplicate half-space, non-pointed cone, empty interior).
    """
    if halfspaces is None and generators is None:
        raise ConeError("need halfspaces or generators")
    if halfspaces is not None:
        A = _normalize_rows(halfspaces, "halfspaces")
        dim = A.shape[1]
        if dim > MAX_DIM:
            raise ConeError(f"dimension {dim} exceeds supported maximum {MAX_DIM}")
        if _dedupe(A).shape[0] < A.shape[0]:
            raise ConeError("rank deficiency: duplicate half-space row")
        if np.linalg.matrix_rank(A, tol=1e-9) < dim:
            raise ConeError("non-pointed cone: half-space matrix has rank < L")
        V = extreme_rays(A)
        if V.shape[0] == 0 or np.linalg.matrix_rank(V, tol=1e-9) < dim:
            raise ConeError("empty interior: generators do not span R^L")
        for i, a in enumerate(A):
            tight = V[np.abs(V @ a) < 1e-9]
            if dim > 1 and (tight.shape[0] == 0
                            or np.linalg.matrix_rank(tight, tol=1e-9) < dim - 1):
                raise ConeError(f"redundant half-space row {i} is not a facet")
        if generators is not None:
            G = _normalize_rows(generators, "generators")
            if np.any(A @ G.T < -1e-9):
                raise ConeError("supplied generators lie outside the half-spaces")
    else:
        G = _normalize_rows(generators, "generators")
        dim = G.shape[1]
        if dim > MAX_DIM:
            raise ConeError(f"dimension {dim} exceeds supported maximum {MAX_DIM}")
        if np.linalg.matrix_rank(G, tol=1e-9) < dim:
            raise ConeError("empty interior: generators do not span R^L")
        A = facet_normals(G)
        if A.shape[0] == 0 or np.linalg.matrix_rank(A, tol=1e-9) < dim:
            raise ConeError("non-pointed cone: generators contain a line")
        V = extreme_rays(A)
    _validate(A, V)
    return PreferenceCone(_frozen(A), _frozen(V))


def orthant(dim: int) -> PreferenceCone:
    """The nonnegative orthant of R^dim."""
    return build_cone(halfspaces=np.eye(dim))


def angle_cone(theta: float) -> PreferenceCone:
    """2-D cone of vectors at angle in ``[0, theta]`` from the x-axis."""
    if not 0 < theta < math.pi:
        raise ConeError("theta must lie in (0, pi)")
    return build_cone(generators=[[1.0, 0.0], [math.cos(theta), math.sin(theta)]])


def cone_from_dict(data: dict) -> PreferenceCone:
    if not isinstance(data, dict) or not ({"halfspaces", "generators"} & data.keys()):
        raise ConeError('cone object needs "halfspaces" and/or "generators"')
    return build_cone(halfspaces=data.get("halfspaces"),
                      generators=data.get("generators"))


def load_cone(path) -> PreferenceCone:
    """Read a cone JSON file (keys ``halfspaces`` and/or ``generators``)."""
    with open(Path(path)) as fh:
        return cone_from_dict(json.load(fh))


def _check_dim(cone, *vectors):
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.shape != (cone.dimension,):
            raise InputError(
                f"dimension mismatch: expected length {cone.dimension}, got {v.shape}")
        out.append(v)
    return out


def cone_contains(cone: PreferenceCone, x, tol: float = MEMBERSHIP_TOL) -> bool:
    (x,) = _check_dim(cone, x)
    return bool(np.min(cone.halfspace_matrix @ x) >= -tol)


def dominates(cone: PreferenceCone, mu_i, mu_j, mode: str = "weak",
              tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether ``mu_j`` dominates ``mu_i`` under the cone order.

    ``weak``: ``mu_j - mu_i`` in C. ``strict``: weak and the vectors differ.
    ``strong``: ``mu_j - mu_i`` in the interior of C.
    """
    mu_i, mu_j = _check_dim(cone, mu_i, mu_j)
    diff = mu_j - mu_i
    slack = cone.halfspace_matrix @ diff
    if mode == "weak":
        return bool(slack.min() >= -tol)
    if mode == "strict":
        return bool(slack.min() >= -tol and np.linalg.norm(diff) > STRICT_TOL)
    if mode == "strong":
        return bool(slack.min() > tol)
    raise InputError(f"unknown dominance mode {mode!r}")


def project(cone: PreferenceCone, d, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection of ``d`` onto the cone.

    Solved as nonnegative least squares over the generators (Lawson-Hanson
    active set); the result is checked against the Moreau optimality
    conditions before being returned.
    """
    (d,) = _check_dim(cone, d)
    if not np.any(d):
        return np.zeros_like(d)
    V = cone.generators
    try:
        alpha, _ = nnls(V.T, d, maxiter=50 * V.shape[0] + 100)
    except RuntimeError as exc:
        raise NumericalError(f"cone projection did not converge: {exc}") from exc
    p = V.T @ alpha
    r = d - p
    scale = max(1.0, np.linalg.norm(d))
    residual = max(float(np.max(V @ r, initial=0.0)), abs(float(p @ r))) / scale
    if residual > tol:
        raise NumericalError("cone projection failed optimality check",
                             residual=residual, best=p)
    return p


def polar_projection_norm(cone: PreferenceCone, d) -> float:
    """``sup_{z in C, |z| <= 1} z.d``, i.e. the norm of the projection of d on C."""
    return float(np.linalg.norm(project(cone, d)))
