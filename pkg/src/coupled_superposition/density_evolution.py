"""Noise-and-interference power recursions for block and coupled systems.

Block:    x_i = G(1 / (alpha' x_{i-1})) + sigma'^2,  x_0 = 1 + sigma'^2

Coupled:  x_i^t = 1/(2W+1) sum_{a=-W..W} G(snr_{i-1}^{t+a}) + sigma'^2
          snr^u = 1/(alpha'(2W+1)) sum_{b=-W..W} 1 / x^{u+b}

where ``G`` is g_mse (two-stage schedule) or g_mse with everything at or above
the code threshold set to zero (hard-feedback schedule).  Positions ``t <= 0``
carry no streams: any window touching them has infinite SNR and contributes
zero MSE.  Positions beyond ``T_max`` are clamped at ``1 + sigma'^2``.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .mse import MseFunction

log = logging.getLogger(__name__)


class ScheduleKind(enum.Enum):
    TWO_STAGE = "two-stage"
    HARD_FEEDBACK = "hard-feedback"


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind = ScheduleKind.TWO_STAGE
    theta: float | None = None

    def __post_init__(self):
        if self.kind is ScheduleKind.HARD_FEEDBACK and not (self.theta and self.theta > 0):
            raise ValueError("hard-feedback schedule needs a positive code threshold")

    @classmethod
    def two_stage(cls, theta: float | None = None) -> "Schedule":
        return cls(ScheduleKind.TWO_STAGE, theta)

    @classmethod
    def hard_feedback(cls, theta: float) -> "Schedule":
        return cls(ScheduleKind.HARD_FEEDBACK, theta)

    def mse(self, f: MseFunction, snr):
        snr = np.asarray(snr, dtype=float)
        g = np.asarray(f(snr), dtype=float)
        if self.kind is ScheduleKind.HARD_FEEDBACK:
            g = np.where(snr >= self.theta, 0.0, g)
        return g


@dataclass
class DeTrajectory:
    """Result of a density-evolution run.

    ``x`` holds the recorded iterates: shape ``(n_recorded,)`` for a block run,
    ``(n_recorded, T_max)`` for a coupled run; ``iters`` are their iteration
    numbers.  ``gamma`` is the SINR after the last iteration (a scalar for a
    block run, per position otherwise).
    """

    alpha: float
    sigma2: float
    schedule: Schedule
    x: np.ndarray
    iters: np.ndarray
    gamma: np.ndarray | float
    converged: bool
    last_delta: float
    W: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def coupled(self) -> bool:
        return self.W is not None

    @property
    def final(self):
        return self.x[-1]

    @property
    def n_iter(self) -> int:
        return int(self.iters[-1])

    def to_csv(self, path, every: int = 1):
        """Write ``iter, t, x, gamma`` rows; block runs use ``t = 0``.

        ``gamma`` is the SINR implied by each recorded iterate.
        """
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "t", "x", "gamma"])
            for it, row in self.rows(every):
                w.writerow(row)

    def rows(self, every: int = 1):
        for k in range(0, len(self.iters), every):
            it = int(self.iters[k])
            if self.coupled:
                g = coupled_sinr(self.x[k], self.alpha, self.W, self.sigma2)
                for t, (xv, gv) in enumerate(zip(self.x[k], g), start=1):
                    yield it, (it, t, repr(float(xv)), repr(float(gv)))
            else:
                xv = float(self.x[k])
                yield it, (it, 0, repr(xv), repr(1.0 / (self.alpha * xv)))


def run_block_de(f: MseFunction, alpha: float, sigma2: float,
                 schedule: Schedule | None = None, max_iters: int = 100_000,
                 stop_tol: float = 1e-12, x0: float | None = None) -> DeTrajectory:
    if not alpha > 0 or not sigma2 > 0:
        raise ValueError("alpha' and sigma'^2 must be positive")
    schedule = schedule or Schedule.two_stage()
    x = 1.0 + sigma2 if x0 is None else x0
    xs = [x]
    delta = np.inf
    converged = False
    for _ in range(max_iters):
        new = float(schedule.mse(f, 1.0 / (alpha * x))) + sigma2
        delta = abs(new - x)
        x = new
        xs.append(x)
        if delta < stop_tol:
            converged = True
            break
    if not converged:
        log.warning("block DE did not converge in %d iterations (last delta %.3g)",
                    max_iters, delta)
    xs = np.asarray(xs)
    return DeTrajectory(alpha, sigma2, schedule, xs, np.arange(len(xs)), 1.0 / (alpha * x),
                        converged, float(delta))


def _window_sum(a: np.ndarray, span: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(a)])
    return c[span:] - c[:-span]


def coupled_sinr(x: np.ndarray, alpha: float, W: int, sigma2: float) -> np.ndarray:
    """Per-position SINR ``1/(alpha'(2W+1)) sum_j 1/x^{t+j}`` for t = 1..T_max.

    Windows reaching ``t <= 0`` are infinite; positions past ``T_max`` use the
    clamp value ``1 + sigma'^2``.
    """
    T = len(x)
    span = 2 * W + 1
    inv = np.concatenate([1.0 / x, np.full(W, 1.0 / (1.0 + sigma2))])
    out = np.full(T, np.inf)
    sums = _window_sum(inv, span)  # windows centered at W+1 .. T
    out[W:] = sums[: T - W] / (alpha * span)
    return out


def coupled_initial(T: int, W: int, sigma2: float) -> np.ndarray:
    t = np.arange(1, T + 1)
    return np.minimum(t / (2 * W + 1), 1.0) + sigma2


def coupled_step(f: MseFunction, x: np.ndarray, alpha: float, sigma2: float, W: int,
                 schedule: Schedule) -> np.ndarray:
    """One iteration of the coupled recursion on positions 1..T_max."""
    span = 2 * W + 1
    top = 1.0 + sigma2
    # 1/x on positions 1 .. T+2W (clamped beyond T)
    inv = np.concatenate([1.0 / x, np.full(2 * W, 1.0 / top)])
    # group SNRs for centers u = W+1 .. T+W; centers u <= W see t <= 0
    snr = _window_sum(inv, span) / (alpha * span)
    G = np.concatenate([np.zeros(2 * W), schedule.mse(f, snr)])  # centers 1-W .. T+W
    return _window_sum(G, span) / span + sigma2


def run_coupled_de(f: MseFunction, alpha: float, sigma2: float, W: int,
                   T_max: int | None = None, schedule: Schedule | None = None,
                   max_iters: int = 200_000, stop_tol: float = 1e-12,
                   record_every: int = 1) -> DeTrajectory:
    """Iterate the coupled recursion from the ramp initial condition.

    ``record_every`` thins the stored history; the first and the last iterate
    are always kept.
    """
    if W < 0:
        raise ValueError("W must be non-negative")
    if not alpha > 0 or not sigma2 > 0:
        raise ValueError("alpha' and sigma'^2 must be positive")
    T_max = 10 * (2 * W + 1) if T_max is None else int(T_max)
    if T_max < 4 * W + 4:
        raise ValueError(f"T_max must be at least 4W+4 = {4 * W + 4}")
    schedule = schedule or Schedule.two_stage()
    x = coupled_initial(T_max, W, sigma2)
    hist, iters = [x], [0]
    delta = np.inf
    converged = False
    i = 0
    for i in range(1, max_iters + 1):
        new = coupled_step(f, x, alpha, sigma2, W, schedule)
        delta = float(np.max(np.abs(new - x)))
        x = new
        if delta < stop_tol:
            converged = True
        if converged or i % record_every == 0:
            hist.append(x)
            iters.append(i)
        if converged:
            break
    if iters[-1] != i:
        hist.append(x)
        iters.append(i)
    if not converged:
        log.warning("coupled DE did not converge in %d iterations (last delta %.3g)",
                    max_iters, delta)
    return DeTrajectory(alpha, sigma2, schedule, np.asarray(hist), np.asarray(iters),
                        coupled_sinr(x, alpha, W, sigma2), converged, delta, W=W,
                        extra={"T_max": T_max})


def decodable(trajectory: DeTrajectory, theta: float):
    """Flag positions (or the block system) whose final SINR reaches ``theta``."""
    g = trajectory.gamma
    if trajectory.coupled:
        return np.asarray(g) >= theta
    return bool(g >= theta)
