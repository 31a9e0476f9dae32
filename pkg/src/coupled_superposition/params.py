"""Physical parameters of one block or coupled configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


def effective_load(alpha: float, sigma2: float, L: int | None = None):
    """Map (alpha, sigma2) to the finite-size pair (alpha', sigma'^2).

    With ``L=None`` the large-system limit is used and both pass through
    unchanged.  Otherwise ``M = L / alpha`` and
    ``alpha' = (L-1)/(M-1)``, ``sigma'^2 = sigma2 * L/(L-1)``.
    """
    if L is None:
        return alpha, sigma2
    M = L / alpha
    if L < 2 or M <= 1:
        raise ValueError("need L >= 2 and M > 1")
    return (L - 1) / (M - 1), sigma2 * L / (L - 1)


@dataclass(frozen=True)
class SystemParams:
    """Parameters of a superposition system.

    ``M1`` is the replication factor, ``M2`` the signature length, so each
    symbol appears ``M = M1*M2`` times in the channel sequence.  ``W`` is the
    coupling half-width; ``W=None`` describes a block (uncoupled) system.
    """

    L: int
    M1: int
    M2: int
    N: int
    B: int = 1
    sigma2: float = 0.1
    W: int | None = None
    R: float = 1.0
    theta: float | None = None

    def __post_init__(self):
        for name in ("L", "M1", "M2", "N", "B"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.M < 2:
            raise ValueError("repetition factor M = M1*M2 must be at least 2")
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be non-negative")
        if not 0 < self.R <= 1:
            raise ValueError("code rate R must lie in (0, 1]")
        if self.theta is not None and not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.W is not None:
            if self.W < 0:
                raise ValueError("W must be non-negative")
            span = 2 * self.W + 1
            if (self.M * self.N) % span or self.L % span:
                raise ValueError(f"2W+1 = {span} must divide both M*N = {self.M * self.N} "
                                 f"and L = {self.L}")

    @property
    def M(self) -> int:
        return self.M1 * self.M2

    @property
    def coupled(self) -> bool:
        return self.W is not None

    @property
    def alpha(self) -> float:
        return self.L / self.M

    @property
    def alpha_eff(self) -> float:
        """(L-1)/(M-1); requires L >= 2."""
        if self.L < 2:
            raise ValueError("effective load needs L >= 2")
        return (self.L - 1) / (self.M - 1)

    @property
    def sigma2_eff(self) -> float:
        if self.L < 2:
            raise ValueError("effective noise needs L >= 2")
        return self.sigma2 * self.L / (self.L - 1)

    @property
    def span(self) -> int:
        return 2 * (self.W or 0) + 1

    @property
    def N_w(self) -> int:
        return self.M * self.N // self.span

    @property
    def L_w(self) -> int:
        return self.L // self.span

    @property
    def ebn0(self) -> float:
        return 1.0 / (2.0 * self.alpha * self.B * self.R * self.sigma2)

    @property
    def ebn0_db(self) -> float:
        return 10.0 * math.log10(self.ebn0)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(1.0 / self.sigma2)

    def to_dict(self) -> dict:
        return asdict(self)
