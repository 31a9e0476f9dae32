"""PAM alphabets, the symbol MSE curve and the capacity functions built on it.

Every expectation over Gaussian noise is computed with a uniform-grid
trapezoidal rule on the standard normal density.  The integrands are analytic
and decay like the Gaussian, so the rule converges exponentially in the number
of nodes; halving the step is used as the convergence check.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline
from scipy.special import erfc, logsumexp

LN2 = math.log(2.0)

# Half-width of the truncated standard-normal support; phi(12.5) ~ 1e-34.
_XI_MAX = 12.5
_CACHE_GRID = (1e-6, 1e6, 160)  # (lo, hi, points per decade)
# Cached values below this are returned as zero.
_CACHE_FLOOR = 1e-30


class QuadratureError(ArithmeticError):
    """Raised when successive quadrature refinements disagree."""


def _as_snr(snr):
    snr = np.asarray(snr, dtype=float)
    if np.any(np.isnan(snr)) or np.any(snr < 0):
        raise ValueError("SNR must be non-negative")
    return snr


@dataclass(frozen=True)
class Constellation:
    """Uniform 2^B-PAM alphabet normalized to unit average power."""

    bits: int
    points: np.ndarray = field(repr=False)
    priors: np.ndarray = field(repr=False)

    @classmethod
    def pam(cls, bits: int) -> "Constellation":
        if int(bits) != bits or bits < 1:
            raise ValueError(f"modulation index must be a positive integer, got {bits}")
        bits = int(bits)
        k = 2**bits
        raw = np.arange(-(k - 1), k, 2, dtype=float)
        points = raw / np.sqrt(np.mean(raw**2))
        priors = np.full(k, 1.0 / k)
        points.setflags(write=False)
        priors.setflags(write=False)
        return cls(bits, points, priors)

    @property
    def size(self) -> int:
        return len(self.points)

    def energy(self) -> float:
        return float(np.sum(self.priors * self.points**2))

    def index_of(self, symbols):
        """Map symbol amplitudes back to alphabet indices (nearest point)."""
        symbols = np.asarray(symbols, dtype=float)
        return np.abs(symbols[..., None] - self.points).argmin(axis=-1)

    def conditional_mean(self, z, snr):
        """E[v | z] for z = v + n, n ~ N(0, 1/snr), elementwise in z and snr."""
        z, snr = np.broadcast_arrays(np.asarray(z, float), np.asarray(snr, float))
        if self.bits == 1:
            return np.tanh(snr * z)
        a = self.points
        logits = snr[..., None] * (z[..., None] * a - 0.5 * a * a)
        logits -= logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        return (w * a).sum(axis=-1) / w.sum(axis=-1)


def _normal_nodes(n_nodes: int):
    xi = np.linspace(-_XI_MAX, _XI_MAX, n_nodes)
    h = xi[1] - xi[0]
    w = h * np.exp(-0.5 * xi * xi) / math.sqrt(2.0 * math.pi)
    return xi, w


def _mse_kernel(constellation: Constellation, snr: np.ndarray, n_nodes: int,
                derivative: bool = False):
    """MSE (and optionally its SNR derivative -E[Var(v|z)^2]) by quadrature."""
    xi, w = _normal_nodes(n_nodes)
    flat = snr.reshape(-1)
    mse = np.zeros_like(flat)
    dmse = np.zeros_like(flat)
    finite = np.isfinite(flat)
    g = flat[finite]
    if constellation.bits == 1:
        s = g[:, None] + np.sqrt(g)[:, None] * xi
        # (1 - tanh s)^2 = 4 / (1 + e^{2s})^2
        mse[finite] = (4.0 * np.exp(-2.0 * np.logaddexp(0.0, 2.0 * s))) @ w
        if derivative:
            # Var(v|z) = sech^2(s); symmetric alphabet so conditioning on v=+1 suffices
            sech2 = 4.0 * np.exp(-2.0 * np.abs(s) - 2.0 * np.log1p(np.exp(-2.0 * np.abs(s))))
            dmse[finite] = -(sech2 * sech2) @ w
    else:
        a = constellation.points
        p = constellation.priors
        chunk = max(1, 1_000_000 // (n_nodes * len(a) * len(a)))
        res = np.empty_like(g)
        dres = np.empty_like(g)
        for lo in range(0, len(g), chunk):
            gc = g[lo : lo + chunk]
            rg = np.sqrt(gc)[:, None, None, None]
            diff = a[None, :] - a[:, None]  # a_j - a_i, shape (i, j)
            # log-posterior of a_j given sqrt(g) a_i + xi, up to a constant in j
            logits = -(rg * diff[None, :, None, :] - xi[None, None, :, None]) ** 2 / 2.0
            logits -= logits.max(axis=-1, keepdims=True)
            post = np.exp(logits)
            post /= post.sum(axis=-1, keepdims=True)
            # error of the conditional mean relative to the sent point, no cancellation
            err = (post * diff[None, :, None, :]).sum(-1)
            res[lo : lo + chunk] = np.einsum("bin,n,i->b", err * err, w, p)
            if derivative:
                var = (post * diff[None, :, None, :] ** 2).sum(-1) - err * err
                dres[lo : lo + chunk] = -np.einsum("bin,n,i->b", var * var, w, p)
        mse[finite] = res
        dmse[finite] = dres
    mse = mse.reshape(snr.shape)
    if derivative:
        return mse, dmse.reshape(snr.shape)
    return mse


def _capacity_kernel(constellation: Constellation, snr: np.ndarray, n_nodes: int) -> np.ndarray:
    xi, w = _normal_nodes(n_nodes)
    flat = snr.reshape(-1)
    out = np.empty_like(flat)
    finite = np.isfinite(flat)
    out[~finite] = constellation.bits
    g = flat[finite]
    if constellation.bits == 1:
        s = 2.0 * g[:, None] + 2.0 * np.sqrt(g)[:, None] * xi
        loss = np.logaddexp(0.0, -s) @ w
        out[finite] = 1.0 - loss / LN2
    else:
        a = constellation.points
        p = constellation.priors
        diff = a[:, None] - a[None, :]  # a_i - a_j
        res = np.empty_like(g)
        chunk = max(1, 2_000_000 // (n_nodes * len(a) * len(a)))
        for lo in range(0, len(g), chunk):
            gc = g[lo : lo + chunk]
            d = np.sqrt(gc)[:, None, None] * diff  # (batch, i, j)
            expo = -d[..., None] * xi - 0.5 * (d * d)[..., None]  # (batch, i, j, node)
            lse = logsumexp(expo, axis=2)  # (batch, i, node)
            res[lo : lo + chunk] = np.einsum("bin,n,i->b", lse, w, p)
        out[finite] = constellation.bits - res / LN2
    return np.clip(out, 0.0, constellation.bits).reshape(snr.shape)


class MseFunction:
    """Conditional-mean MSE curve g_mse(snr) of a 2^B-PAM alphabet in AWGN.

    Parameters
    ----------
    bits : int
        Modulation index B.
    quadrature_order : int
        Number of nodes of the trapezoidal rule over the standard normal.
    cached : bool
        Evaluate through a cubic Hermite interpolant in log-log coordinates
        whose node slopes are the exact derivative ``-E[Var(v|z)^2]``.  It is
        built once, on first use, under a lock.  ``False`` always runs the
        quadrature.
    check : bool
        Compare every exact evaluation against the rule with half the step and
        raise :class:`QuadratureError` above ``tol``.
    tol : float
        Absolute tolerance of the convergence check.
    """

    def __init__(self, bits: int = 1, quadrature_order: int = 501, cached: bool = True,
                 check: bool = False, tol: float = 1e-10):
        self.constellation = Constellation.pam(bits)
        if quadrature_order < 101:
            raise ValueError("quadrature_order must be at least 101")
        self.quadrature_order = int(quadrature_order)
        self.check = check
        self.tol = tol
        self.cached = cached
        self._interp = None
        self._lock = threading.Lock()

    @property
    def bits(self) -> int:
        return self.constellation.bits

    def __repr__(self):
        return (f"MseFunction(bits={self.bits}, quadrature_order={self.quadrature_order}, "
                f"cached={self.cached})")

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_lock"] = None
        state["_interp"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _quad(self, kernel, snr):
        val = kernel(self.constellation, snr, self.quadrature_order)
        if self.check:
            fine = kernel(self.constellation, snr, 2 * self.quadrature_order - 1)
            err = np.max(np.abs(fine - val), initial=0.0)
            if err > self.tol:
                raise QuadratureError(
                    f"quadrature refinement changed the result by {err:.3g} (> {self.tol:g})")
            val = fine
        return val

    def _cache(self):
        if self._interp is None:
            with self._lock:
                if self._interp is None:
                    self._interp = self._build_cache()
        return self._interp

    def _build_cache(self):
        lo, hi, per_decade = _CACHE_GRID
        n = int(round(np.log10(hi / lo) * per_decade)) + 1
        grid = np.logspace(np.log10(lo), np.log10(hi), n)
        vals, dvals = _mse_kernel(self.constellation, grid, self.quadrature_order,
                                  derivative=True)
        keep = vals > _CACHE_FLOOR
        # the interpolant must end at the first point below the floor
        stop = np.argmin(keep) if not keep.all() else len(keep)
        grid, vals, dvals = grid[:stop], vals[:stop], dvals[:stop]
        # Hermite cubic in (log snr, log mse) with exact slopes
        slope = grid * dvals / vals
        spline = CubicHermiteSpline(np.log(grid), np.log(vals), slope, extrapolate=False)
        return spline, grid[0], grid[-1]

    def exact(self, snr):
        """Quadrature evaluation, bypassing the cache."""
        snr = _as_snr(snr)
        val = self._quad(_mse_kernel, snr)
        return val if val.ndim else float(val)

    def __call__(self, snr):
        snr = _as_snr(snr)
        if not self.cached:
            val = self._quad(_mse_kernel, snr)
            return val if val.ndim else float(val)
        spline, lo, hi = self._cache()
        out = np.zeros(snr.shape)
        inside = (snr >= lo) & (snr <= hi)
        if np.any(inside):
            out[inside] = np.exp(spline(np.log(snr[inside])))
        below = snr < lo
        if np.any(below):
            out[below] = _mse_kernel(self.constellation, snr[below], self.quadrature_order)
        return out if out.ndim else float(out)

    def derivative(self, snr):
        """d g_mse / d snr = -E[Var(v|z)^2], by quadrature."""
        snr = _as_snr(snr)
        _, d = _mse_kernel(self.constellation, snr, self.quadrature_order, derivative=True)
        return d if d.ndim else float(d)

    def capacity(self, snr):
        """Mutual information (bits per real dimension) of the PAM-input AWGN channel."""
        snr = _as_snr(snr)
        val = self._quad(_capacity_kernel, snr)
        return val if np.ndim(val) else float(val)


def awgn_capacity(sigma2):
    """Capacity 0.5*log2(1 + 1/sigma2) of the real AWGN channel, unit signal power."""
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(~(sigma2 > 0)):
        raise ValueError("noise power must be positive")
    val = 0.5 * np.log1p(1.0 / sigma2) / LN2
    return val if val.ndim else float(val)


def sigma2_for_capacity(capacity: float) -> float:
    """Noise power at which the AWGN capacity equals ``capacity`` bits."""
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    return 1.0 / math.expm1(2.0 * capacity * LN2)


def g_mse(f: MseFunction, snr):
    """Symbol MSE at SNR ``snr`` (quadrature, not the cached interpolant)."""
    val = f.exact(snr)
    return val if np.ndim(val) else float(val)


def q_function(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def g2_bounds(snr):
    """Bounds on the 2-PAM MSE: ``(max(0, 1 - snr), pi*Q(sqrt(snr)), 1/(1 + snr))``.

    The first is a lower bound, the other two are upper bounds.
    """
    snr = _as_snr(snr)
    lower = np.maximum(0.0, 1.0 - snr)
    upper = math.pi * q_function(np.sqrt(snr))
    upper2 = 1.0 / (1.0 + snr)
    if snr.ndim == 0:
        return float(lower), float(upper), float(upper2)
    return lower, upper, upper2


def constrained_capacity(f: MseFunction, snr):
    return f.capacity(snr)


def capacity_inverse(f: MseFunction, rate: float) -> float:
    """SNR at which the constrained capacity equals ``rate`` bits."""
    if not 0.0 < rate < f.bits:
        raise ValueError(f"rate must lie in (0, {f.bits})")
    hi = 1.0
    while f.capacity(hi) < rate:
        hi *= 4.0
    return optimize.brentq(lambda s: f.capacity(s) - rate, 0.0, hi, xtol=1e-14, rtol=1e-13)


def integral_gmse(f: MseFunction, a: float, b: float, rtol: float = 1e-6) -> float:
    """Area under g_mse on [a, b] by adaptive quadrature.

    The result is checked against the I-MMSE identity
    ``2 ln2 (C_A(b) - C_A(a))`` and a :class:`QuadratureError` is raised when
    the two disagree by more than ``rtol`` (relative, with a 1e-12 floor).
    """
    if not 0 <= a <= b:
        raise ValueError("need 0 <= a <= b")
    if a == b:
        return 0.0
    points = [p for p in (1.0, 10.0, 100.0) if a < p < b] or None
    if math.isinf(b):
        area, _ = integrate.quad(lambda y: f.exact(y), a, np.inf, epsabs=1e-13, epsrel=1e-11,
                                 limit=400)
    else:
        area, _ = integrate.quad(lambda y: f.exact(y), a, b, epsabs=1e-13, epsrel=1e-11,
                                 limit=400, points=points)
    ref = 2.0 * LN2 * (f.capacity(b) - f.capacity(a))
    if abs(area - ref) > rtol * max(abs(ref), 1e-12 / rtol):
        raise QuadratureError(f"MSE area {area!r} disagrees with capacity difference {ref!r}")
    return area


def area_from_capacity(f: MseFunction, a, b):
    """Fast area under g_mse on [a, b] through the capacity difference (vectorized)."""
    return 2.0 * LN2 * (np.asarray(f.capacity(b)) - np.asarray(f.capacity(a)))


def biawgn_capacity_bounds(snr):
    """Lower/upper bounds ``((snr - snr^2)/(2 ln 2), 1)`` on the 2-PAM capacity.

    The lower bound only holds for snr < 1 and is clamped at 0 elsewhere.
    """
    snr = _as_snr(snr)
    lower = np.where(snr < 1.0, np.maximum(0.0, (snr - snr * snr) / (2.0 * LN2)), 0.0)
    upper = np.ones_like(snr)
    if snr.ndim == 0:
        return float(lower), float(upper)
    return lower, upper
