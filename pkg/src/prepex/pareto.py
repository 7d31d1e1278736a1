"""Pareto sets under a cone order and the distances between them."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import MEMBERSHIP_TOL, STRICT_TOL, PreferenceCone, polar_projection_norm


@dataclass(frozen=True, eq=False)
class ParetoFront:
    """Sorted arm indices and their mean vectors (columns of an L x |P| array)."""

    arm_indices: tuple
    means: np.ndarray

    def __len__(self):
        return len(self.arm_indices)

    def __contains__(self, k):
        return k in self.arm_indices

    def __eq__(self, other):
        if not isinstance(other, ParetoFront):
            return NotImplemented
        return self.arm_indices == other.arm_indices

    def __hash__(self):
        return hash(self.arm_indices)

    def as_set(self) -> frozenset:
        return frozenset(self.arm_indices)


def _means(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if M.ndim != 2 or M.shape[1] < 1:
        raise InputError(f"mean matrix must be L x K with K >= 1, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("mean matrix has non-finite entries")
    return M


def make_front(indices, M) -> ParetoFront:
    """Wrap an arbitrary arm subset of instance ``M`` as a front."""
    M = _means(M)
    idx = tuple(sorted({int(i) for i in indices}))
    if any(not 0 <= i < M.shape[1] for i in idx):
        raise InputError(f"arm index out of range in {idx}")
    return ParetoFront(idx, M[:, list(idx)].copy())


def dominance_matrix(M, cone: PreferenceCone, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """``D[i, j]`` is True when arm j strictly dominates arm i."""
    M = _means(M)
    if M.shape[0] != cone.dimension:
        raise InputError(
            f"dimension mismatch: means have L={M.shape[0]}, cone L={cone.dimension}")
    diff = M.T[None, :, :] - M.T[:, None, :]          # diff[i, j] = M_j - M_i
    slack = np.einsum("rl,ijl->ijr", cone.halfspace_matrix, diff)
    weak = slack.min(axis=2) >= -tol
    distinct = np.linalg.norm(diff, axis=2) > STRICT_TOL
    return weak & distinct


def pareto_set(M, cone: PreferenceCone) -> ParetoFront:
    """Arms not strictly dominated by any other arm. Duplicate arms are all kept."""
    M = _means(M)
    dominated = dominance_matrix(M, cone).any(axis=1)
    return make_front(np.flatnonzero(~dominated), M)


def arm_front_distance(k: int, front: ParetoFront, M, cone: PreferenceCone) -> float:
    """Smallest cone-scalarized margin by which some front arm exceeds arm ``k``."""
    M = _means(M)
    if len(front) == 0:
        raise InputError("empty front")
    if not 0 <= k < M.shape[1]:
        raise InputError(f"arm index {k} out of range")
    return min(max(0.0, polar_projection_norm(cone, M[:, kp] - M[:, k]))
               for kp in front.arm_indices)


def front_metric(front_a: ParetoFront, front_b: ParetoFront, M,
                 cone: PreferenceCone) -> float:
    if len(front_a) == 0 or len(front_b) == 0:
        raise InputError("empty front")
    a_to_b = max(arm_front_distance(k, front_b, M, cone) for k in front_a.arm_indices)
    b_to_a = max(arm_front_distance(k, front_a, M, cone) for k in front_b.arm_indices)
    return max(a_to_b, b_to_a)


def write_front_csv(path, M, front: ParetoFront) -> None:
    """CSV with columns ``arm_index, mean_1..mean_L, in_front``."""
    M = _means(M)
    L, K = M.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm_index"] + [f"mean_{l + 1}" for l in range(L)] + ["in_front"])
        for k in range(K):
            w.writerow([k] + [repr(float(x)) for x in M[:, k]] + [int(k in front)])
