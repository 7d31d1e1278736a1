"""Preference-based Track-and-Stop.

Each step: rebuild the estimated instance from empirical means, evaluate the
GLRT-style stopping statistic against the calibrated threshold, and if the
run continues pull the arm chosen by C-tracking of the optimal allocation for
the estimate. The allocation is re-solved every ``ceil(sqrt(t))`` steps.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .concentration import ThresholdParams, threshold_beta
from .divergence import RewardFamily
from .errors import InputError, NumericalError, PrepexError
from .geometry import PreferenceCone
from .oracle import Instance, InnerProblem, optimal_allocation
from .pareto import ParetoFront, pareto_set

log = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 1_000_000


class Environment:
    """Seeded reward source; each arm draws from its own random stream.

    ``stream_ids`` names the stream used by each arm (default ``0..K-1``), so
    a relabeled environment can reuse the original arms' noise.
    """

    def __init__(self, instance: Instance, rng_seed: int = 0, stream_ids=None):
        self.instance = instance
        self.rng_seed = int(rng_seed)
        K = instance.num_arms
        ids = tuple(range(K)) if stream_ids is None else tuple(int(i) for i in stream_ids)
        if len(ids) != K:
            raise InputError("need one stream id per arm")
        self.stream_ids = ids
        self._rngs = [np.random.default_rng(np.random.SeedSequence([self.rng_seed, i]))
                      for i in ids]

    @property
    def num_arms(self) -> int:
        return self.instance.num_arms

    def sample(self, k: int) -> np.ndarray:
        if not 0 <= k < self.num_arms:
            raise InputError(f"arm {k} out of range")
        mean = self.instance.means[:, k]
        rng = self._rngs[k]
        fam = self.instance.family
        if fam.kind == "gaussian":
            return mean + np.asarray(fam.sigma) * rng.standard_normal(mean.shape[0])
        if fam.kind == "bernoulli":
            return (rng.random(mean.shape[0]) < mean).astype(float)
        return rng.poisson(mean).astype(float)


def sample(env: Environment, k: int) -> np.ndarray:
    return env.sample(k)


@dataclass
class RunState:
    counts: np.ndarray
    empirical_means: np.ndarray
    cumulative_target: np.ndarray
    t: int = 0
    family: RewardFamily = field(default_factory=RewardFamily)

    @classmethod
    def empty(cls, L: int, K: int, family: RewardFamily) -> "RunState":
        return cls(np.zeros(K, dtype=int), np.zeros((L, K)), np.zeros(K), 0, family)

    def update(self, k: int, reward) -> None:
        self.counts[k] += 1
        self.empirical_means[:, k] += (np.asarray(reward) - self.empirical_means[:, k]) \
            / self.counts[k]
        self.t += 1

    def estimated_instance(self) -> Instance:
        M = self.empirical_means.copy()
        return Instance(M, self.family, (float(M.min()), float(M.max())))

    def tracking_gap(self) -> float:
        return float(np.max(np.abs(self.counts - self.cumulative_target)))


@dataclass
class RunResult:
    stopping_time: int
    recommended_front: ParetoFront
    correct: bool
    budget_exhausted: bool
    counts: np.ndarray
    statistic: float
    threshold: float
    max_tracking_ratio: float = 0.0
    trace: list = None

    def to_dict(self) -> dict:
        return {"tau": self.stopping_time,
                "recommended_front": list(self.recommended_front.arm_indices),
                "correct": self.correct, "budget_exhausted": self.budget_exhausted,
                "counts": self.counts.tolist(), "statistic": self.statistic,
                "threshold": self.threshold,
                "max_tracking_ratio": self.max_tracking_ratio}


class TrackingInvariantError(PrepexError, AssertionError):
    pass


def tracking_choice(state: RunState, w) -> int:
    """Add ``w`` to the cumulative target and pick the next arm.

    Arms with ``N_k < sqrt(t) - K/2`` are forced first (smallest index).
    Otherwise the arm furthest behind its cumulative target is chosen,
    i.e. ``argmax_k (target_k - N_k)``, ties to the smallest index.
    """
    w = np.asarray(w, dtype=float)
    K = state.counts.shape[0]
    if w.shape != (K,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise InputError("w must be an allocation over the arms")
    state.cumulative_target += w
    starved = np.flatnonzero(state.counts < math.sqrt(state.t) - K / 2)
    if starved.size:
        return int(starved[0])
    deficit = state.cumulative_target - state.counts
    top = deficit.max()
    return int(np.flatnonzero(deficit >= top - 1e-12)[0])


def stopping_statistic(state: RunState, cone: PreferenceCone, problem=None) -> float:
    """Inner value of the estimated instance with the raw counts as weights."""
    if np.any(state.counts < 1):
        raise InputError("every arm needs a pull before the statistic is defined")
    try:
        problem = problem or InnerProblem(state.estimated_instance(), cone)
        return problem.value(state.counts.astype(float))
    except NumericalError as exc:
        raise NumericalError(f"step {state.t}: {exc}", residual=exc.residual,
                             best=exc.best) from exc


def _open_trace(trace):
    if trace is None or trace is False:
        return None, False
    if hasattr(trace, "write"):
        return trace, False
    return open(trace, "w"), True


def run_prets(env: Environment, cone: PreferenceCone, delta: float,
              max_steps: int = DEFAULT_MAX_STEPS, *, solve_every_step: bool = False,
              check_tracking: bool = True, trace=None) -> RunResult:
    """One run until the statistic crosses the threshold or the budget ends.

    ``trace`` may be a path or a writable text stream; one JSON object per
    step is written with keys ``t, arm, statistic, threshold, front_estimate``.
    With ``check_tracking`` the bound ``max_k |N_k - target_k| <= K(1 + sqrt t)``
    is asserted after every pull.
    """
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    inst = env.instance
    if cone.dimension != inst.num_objectives:
        raise InputError("cone dimension does not match the instance")
    L, K = inst.means.shape
    if max_steps < K:
        raise InputError("max_steps must allow one pull per arm")
    params = ThresholdParams(delta, K)
    state = RunState.empty(L, K, inst.family)
    uniform = np.full(K, 1.0 / K)
    out, owned = _open_trace(trace)
    worst = 0.0

    def record(arm, stat, thr):
        if out is not None:
            front = pareto_set(state.empirical_means, cone).arm_indices
            out.write(json.dumps({"t": state.t, "arm": arm, "statistic": stat,
                                  "threshold": thr, "front_estimate": list(front)}) + "\n")

    def pull(k):
        nonlocal worst
        state.update(k, env.sample(k))
        ratio = state.tracking_gap() / (K * (1 + math.sqrt(state.t)))
        worst = max(worst, ratio)
        if check_tracking and ratio > 1:
            raise TrackingInvariantError(
                f"tracking bound violated at t={state.t}: gap {state.tracking_gap():.3f}")

    try:
        for k in range(K):
            state.cumulative_target += uniform
            pull(k)
            record(k, None, None)
        w = uniform
        next_solve = state.t
        while True:
            est = state.estimated_instance()
            problem = InnerProblem(est, cone)
            stat = stopping_statistic(state, cone, problem)
            thr = threshold_beta(state.counts, params)
            if stat >= thr or state.t >= max_steps:
                break
            if solve_every_step or state.t >= next_solve:
                try:
                    w, _ = optimal_allocation(est, cone, w0=w, problem=problem)
                except NumericalError as exc:
                    log.warning("allocation solve failed at t=%d, keeping previous: %s",
                                state.t, exc)
                next_solve = state.t + math.ceil(math.sqrt(state.t))
            k = tracking_choice(state, w)
            pull(k)
            record(k, stat, thr)
    finally:
        if owned:
            out.close()
    front = pareto_set(state.empirical_means, cone)
    truth = pareto_set(inst.means, cone)
    return RunResult(state.t, front, front == truth, bool(stat < thr), state.counts.copy(),
                     float(stat), float(thr), worst)
