"""Closed-form delay distributions, violation probability and window design."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, InfeasibleTargetError

ArrayLike = Union[float, np.ndarray]


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def frame_index(t: ArrayLike, T_f: float, rel_tol: float = 1e-9) -> ArrayLike:
    """Index of the first frame starting at or after ``t`` (frames start at 0).

    A time within ``rel_tol`` of a frame boundary counts as lying on it, so the
    sensor catches the frame that starts at that instant.
    """
    x = np.asarray(t, dtype=float) / T_f
    r = np.rint(x)
    on_boundary = np.abs(x - r) <= rel_tol * np.maximum(1.0, np.abs(x))
    k = np.where(on_boundary, r, np.ceil(x))
    return int(k) if np.ndim(t) == 0 else k.astype(np.int64)


# -- sensing densities -------------------------------------------------------


def distance_pdf(d: ArrayLike, D_max: float) -> ArrayLike:
    d_arr = np.asarray(d, dtype=float)
    out = np.where((d_arr >= 0) & (d_arr <= D_max), 2.0 * d_arr / D_max**2, 0.0)
    return _scalar_or_array(d, out)


def action_time_pdf(t: ArrayLike, t0: float, v: float, D_max: float) -> ArrayLike:
    t_arr = np.asarray(t, dtype=float)
    inside = (t_arr >= t0) & (t_arr <= t0 + D_max / v)
    out = np.where(inside, 2.0 * v**2 * (t_arr - t0) / D_max**2, 0.0)
    return _scalar_or_array(t, out)


# -- bounded-support distributions ------------------------------------------


@dataclass(frozen=True)
class ClosedFormDist:
    """A continuous distribution on ``[lo, hi]`` given by vectorised pdf/cdf.

    ``sf`` is an optional survival function used where ``1 - cdf`` would lose
    precision (small violation targets). ``atom`` marks a point mass at ``lo``.
    """

    lo: float
    hi: float
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    label: str
    sf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    atom: bool = False

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise DomainError(f"empty support [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def survival(self, t: ArrayLike) -> ArrayLike:
        if self.sf is not None:
            return self.sf(t)
        return _scalar_or_array(t, 1.0 - np.asarray(self.cdf(t)))

    def quantile(self, p: float, rel_tol: float = 1e-12) -> float:
        """Smallest t with cdf(t) >= p, by bisection on the support."""
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"probability must lie in [0, 1], got {p}")
        if self.atom or p == 0.0:
            return self.lo
        return _bisect_increasing(self.cdf, p, self.lo, self.hi, rel_tol)

    def mean(self, grid_n: int = 10_000) -> float:
        if self.atom:
            return self.lo
        t = np.linspace(self.lo, self.hi, grid_n + 1)
        return float(simpson(t * self.pdf(t), x=t))


def _bisect_increasing(fn, target, lo, hi, rel_tol):
    width_stop = rel_tol * (hi - lo)
    a, b = lo, hi
    for _ in range(400):
        if b - a <= width_stop:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if fn(mid) < target:
            a = mid
        else:
            b = mid
    return b


def comp_pdv_dist(C_min: float, C_max: float, allow_degenerate: bool = False) -> ClosedFormDist:
    """Law of |C1 - C2| for two independent uniform computation delays."""
    a = C_max - C_min
    if a < 0 or C_min < 0:
        raise DomainError(f"need 0 <= C_min <= C_max, got ({C_min}, {C_max})")
    if a == 0:
        if not allow_degenerate:
            raise DomainError("C_min == C_max gives a point mass; pass allow_degenerate=True")
        return _point_mass_at_zero("comp")

    def pdf(t):
        t_arr = np.asarray(t, dtype=float)
        out = np.where((t_arr >= 0) & (t_arr <= a), 2.0 * (a - t_arr) / a**2, 0.0)
        return _scalar_or_array(t, out)

    def cdf(t):
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, a)
        return _scalar_or_array(t, (2.0 * a * t_arr - t_arr**2) / a**2)

    def sf(t):
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, a)
        return _scalar_or_array(t, ((a - t_arr) / a) ** 2)

    return ClosedFormDist(0.0, a, pdf, cdf, "comp", sf=sf)


def prop_pdv_dist(D_max: float, v: float) -> ClosedFormDist:
    """Law of |D1 - D2| / v for two sensors uniform over a disc of radius D_max."""
    if not D_max > 0 or not v > 0:
        raise DomainError(f"D_max and v must be > 0, got D_max={D_max}, v={v}")
    a = D_max / v
    scale = 2.0 / (3.0 * a**4)

    def pdf(t):
        t_arr = np.asarray(t, dtype=float)
        # 2t^3 - 6a^2 t + 4a^3 written as 2 (a - t)^2 (t + 2a) stays >= 0 in floating point
        val = scale * 2.0 * (a - t_arr) ** 2 * (t_arr + 2.0 * a)
        out = np.where((t_arr >= 0) & (t_arr <= a), val, 0.0)
        return _scalar_or_array(t, out)

    def cdf(t):
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, a)
        val = scale * (0.5 * t_arr**4 - 3.0 * a**2 * t_arr**2 + 4.0 * a**3 * t_arr)
        return _scalar_or_array(t, np.minimum(val, 1.0))

    def sf(t):
        # 1 - F factors as (a - t)^3 (3a + t) / (3 a^4)
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, a)
        return _scalar_or_array(t, (a - t_arr) ** 3 * (3.0 * a + t_arr) / (3.0 * a**4))

    return ClosedFormDist(0.0, a, pdf, cdf, "prop", sf=sf)


def _point_mass_at_zero(label: str) -> ClosedFormDist:
    def pdf(t):
        return _scalar_or_array(t, np.zeros_like(np.asarray(t, dtype=float)))

    def cdf(t):
        return _scalar_or_array(t, np.where(np.asarray(t, dtype=float) >= 0, 1.0, 0.0))

    return ClosedFormDist(0.0, 0.0, pdf, cdf, label, atom=True)


# -- communication delays ----------------------------------------------------


def trunc_geom_pmf(fail: float, k: int, max_attempts: int) -> float:
    """P(k attempts | success within max_attempts) for per-attempt failure ``fail``."""
    if not 0.0 <= fail < 1.0:
        raise DomainError(f"failure probability must lie in [0, 1), got {fail}")
    if not 1 <= k <= max_attempts:
        raise DomainError(f"attempt index {k} outside 1..{max_attempts}")
    return fail ** (k - 1) * (1.0 - fail) / (1.0 - fail**max_attempts)


@dataclass(frozen=True)
class TruncGeomPmf:
    success_prob: float
    max_attempts: int
    frame: float

    @property
    def attempts(self) -> np.ndarray:
        return np.arange(1, self.max_attempts + 1)

    @property
    def probs(self) -> np.ndarray:
        fail = 1.0 - self.success_prob
        return np.array([trunc_geom_pmf(fail, k, self.max_attempts) for k in self.attempts])

    @property
    def delays(self) -> np.ndarray:
        return self.attempts * self.frame

    def mean_delay(self) -> float:
        return float(np.dot(self.probs, self.delays))


@dataclass(frozen=True)
class AccessDelayPmf:
    """Distribution of the total request plus transmission delay, in frames."""

    frames: np.ndarray
    probs: np.ndarray
    T_f: float

    @property
    def delays(self) -> np.ndarray:
        return self.frames * self.T_f

    def as_dict(self) -> dict:
        return {int(k): float(p) for k, p in zip(self.frames, self.probs)}


def access_delay_pmf(zeta: float, epsilon: float, M_max: int, N_max: int, T_f: float) -> AccessDelayPmf:
    sr = TruncGeomPmf(1.0 - zeta, M_max, T_f).probs
    pt = TruncGeomPmf(1.0 - epsilon, N_max, T_f).probs
    probs = np.convolve(sr, pt)
    return AccessDelayPmf(np.arange(2, M_max + N_max + 1), probs, T_f)


# -- violation probability and window design --------------------------------


def psv(W: ArrayLike, rho2: float, dist: Union[ClosedFormDist, Callable]) -> ArrayLike:
    """Probability that updates of one event land in different windows.

    ``dist`` is either a :class:`ClosedFormDist` or a bare PDV cdf.
    """
    if not 0.0 <= rho2 <= 1.0:
        raise DomainError(f"rho2 must lie in [0, 1], got {rho2}")
    W_arr = np.asarray(W, dtype=float)
    if np.any(W_arr < 0):
        raise DomainError("window duration must be >= 0")
    if isinstance(dist, ClosedFormDist):
        surv = np.asarray(dist.survival(W_arr))
    else:
        surv = 1.0 - np.asarray(dist(W_arr))
    # rho + (1 - rho) * (1 - F) equals 1 - (1 - rho) F and is exact at F = 1
    return _scalar_or_array(W, rho2 + (1.0 - rho2) * surv)


@dataclass(frozen=True)
class PsvCurve:
    mode: str
    rho2: float
    dist: ClosedFormDist

    def __call__(self, W: ArrayLike) -> ArrayLike:
        return psv(W, self.rho2, self.dist)

    def frame_sampled(self, W: ArrayLike, T_f: float) -> ArrayLike:
        """Violation probability of the largest frame multiple not above ``W``."""
        W_arr = np.asarray(W, dtype=float)
        k = np.asarray(frame_index(W_arr, T_f))
        k = np.where(k * T_f > W_arr * (1 + 1e-9), k - 1, k)
        return _scalar_or_array(W, np.asarray(psv(k * T_f, self.rho2, self.dist)))


@dataclass(frozen=True)
class TwiDesign:
    target: float
    rho2: float
    W_star: float
    W_frame: float
    sigma_star: float
    sigma_frame: float
    method: str


def _check_target(target: float, rho2: float) -> None:
    if not target < 1.0:
        raise DomainError(f"target sigma must be < 1, got {target}")
    if target < rho2:
        raise InfeasibleTargetError(target, rho2)


def invert_comp_closed_form(target: float, rho2: float, a: float) -> float:
    """Window for which the computation-delay approximation hits ``target``."""
    _check_target(target, rho2)
    if rho2 == 1.0:
        return a
    surv = (target - rho2) / (1.0 - rho2)
    return a * (1.0 - math.sqrt(surv))


def invert_psv_bisection(target: float, rho2: float, dist: ClosedFormDist, rel_tol: float = 1e-12) -> float:
    _check_target(target, rho2)
    if dist.atom or target == rho2:
        return dist.hi
    width_stop = rel_tol * dist.width
    a, b = dist.lo, dist.hi
    for _ in range(400):
        if b - a <= width_stop:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if psv(mid, rho2, dist) > target:
            a = mid
        else:
            b = mid
    # return the side that is closest to the target; both are within width_stop
    sa, sb = psv(a, rho2, dist), psv(b, rho2, dist)
    return a if abs(sa - target) < abs(sb - target) else b


def frame_aligned_window(W: float, target: float, rho2: float, dist, T_f: float) -> float:
    """Smallest positive multiple of ``T_f`` whose violation probability meets ``target``."""
    k = max(1, frame_index(W, T_f))
    while psv(k * T_f, rho2, dist) > target:
        k += 1
    while k > 1 and psv((k - 1) * T_f, rho2, dist) <= target:
        k -= 1
    return k * T_f


def design_twi(target_sigma: float, rho2: float, dist: ClosedFormDist, T_f: float,
               method: str = "auto") -> TwiDesign:
    """Choose the window duration that achieves ``target_sigma``.

    ``method`` is ``"closed_form"`` (computation-delay law only), ``"bisection"``
    or ``"auto"``, which prefers the closed form where it exists.
    """
    if method == "auto":
        method = "closed_form" if dist.label == "comp" and not dist.atom else "bisection"
    if method == "closed_form":
        if dist.label != "comp" or dist.atom:
            raise DomainError("closed-form inversion only exists for the computation-delay law")
        W_star = invert_comp_closed_form(target_sigma, rho2, dist.hi)
    elif method == "bisection":
        W_star = invert_psv_bisection(target_sigma, rho2, dist)
    else:
        raise DomainError(f"unknown inversion method {method!r}")
    W_frame = frame_aligned_window(W_star, target_sigma, rho2, dist, T_f)
    return TwiDesign(
        target=target_sigma,
        rho2=rho2,
        W_star=W_star,
        W_frame=W_frame,
        sigma_star=float(psv(W_star, rho2, dist)),
        sigma_frame=float(psv(W_frame, rho2, dist)),
        method=method,
    )


# -- numerical oracle for |X1 - X2| -------------------------------------------


def abs_diff_oracle(pdf: Callable, support: tuple, grid_n: int = 10_000,
                    chunk: int = 256) -> ClosedFormDist:
    """Law of |X1 - X2| for i.i.d. X with density ``pdf``, by direct quadrature.

    Composite trapezoid rule on a uniform grid of ``grid_n`` cells over
    ``support``. Independent of the closed forms above, so it can check them.
    """
    lo, hi = map(float, support)
    if grid_n < 1000:
        raise DomainError(f"grid_n must be >= 1000, got {grid_n}")
    if not hi > lo:
        raise DomainError(f"empty support [{lo}, {hi}]")
    x = np.linspace(lo, hi, grid_n + 1)
    fx = np.asarray(pdf(x), dtype=float)
    steps = 0.5 * (fx[1:] + fx[:-1]) * np.diff(x)
    Fx = np.concatenate([[0.0], np.cumsum(steps)])
    total = Fx[-1]
    if abs(total - 1.0) > 1e-6:
        raise DomainError(f"density integrates to {total:.9g} over the support, not 1")

    def _apply(y, kernel):
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y_arr)
        for start in range(0, y_arr.size, chunk):
            block = y_arr[start:start + chunk][:, None]
            out[start:start + chunk] = np.trapezoid(kernel(block) * fx, x, axis=1)
        return out

    def cdf(y):
        def kernel(yb):
            upper = np.interp(x + yb, x, Fx, left=0.0, right=total)
            lower = np.interp(x - yb, x, Fx, left=0.0, right=total)
            return upper - lower

        y_arr = np.asarray(y, dtype=float)
        out = _apply(np.clip(y_arr, 0.0, None), kernel).reshape(y_arr.shape)
        out = np.where(y_arr <= 0, 0.0, out)
        return _scalar_or_array(y, out)

    def pdf_y(y):
        def kernel(yb):
            return np.asarray(pdf(x + yb)) + np.asarray(pdf(x - yb))

        y_arr = np.asarray(y, dtype=float)
        out = _apply(y_arr, kernel).reshape(y_arr.shape)
        out = np.where((y_arr < 0) | (y_arr > hi - lo), 0.0, out)
        return _scalar_or_array(y, out)

    return ClosedFormDist(0.0, hi - lo, pdf_y, cdf, "oracle")


def uniform_pdf(lo: float, hi: float) -> Callable:
    def pdf(x):
        x_arr = np.asarray(x, dtype=float)
        return np.where((x_arr >= lo) & (x_arr <= hi), 1.0 / (hi - lo), 0.0)

    return pdf


def scaled_distance_pdf(D_max: float, v: float) -> Callable:
    """Density of D / v, the propagation delay of a sensor uniform on the disc."""

    def pdf(t):
        return v * np.asarray(distance_pdf(np.asarray(t, dtype=float) * v, D_max))

    return pdf


def pdv_dist(kind: str, C_min: float, C_max: float, D_max: float, v: float,
             allow_degenerate: bool = False) -> ClosedFormDist:
    if kind == "comp":
        return comp_pdv_dist(C_min, C_max, allow_degenerate)
    if kind == "prop":
        return prop_pdv_dist(D_max, v)
    raise DomainError(f"unknown PDV approximation {kind!r} (expected 'comp' or 'prop')")
