"""Möbius transformations, unit-circle preimages and the Jensen audit."""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np

from .polynomial import RootSet, evaluate_sn, evaluate_sn_many
from .rootfinding import RootFindResult
from .sampling import philox_generator

logger = logging.getLogger("critlab.mobius")

INFINITY = complex(math.inf, 0.0)
DEGENERACY_TOLERANCE = 1e-12
SAMPLE_DETERMINANT_FLOOR = 1e-6
LINE_TOLERANCE = 1e-12
COINCIDENCE_TOLERANCE = 1e-9
GRID_CAP = 2**18
STABLE_CHANGE = 1e-3


def is_infinite(z: complex) -> bool:
    return cmath.isinf(z)


@dataclass(frozen=True)
class MobiusTransform:
    """``z -> (a z + b) / (c z + d)``, stored with ``a d - b c = 1``."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self) -> None:
        a, b, c, d = (complex(v) for v in (self.a, self.b, self.c, self.d))
        det = a * d - b * c
        if not abs(det) > DEGENERACY_TOLERANCE:
            raise ValueError(f"Degenerate Möbius transformation (|ad - bc| = {abs(det):.3e}).")
        root = cmath.sqrt(det)
        for name, value in zip("abcd", (a, b, c, d)):
            object.__setattr__(self, name, value / root)

    @classmethod
    def identity(cls) -> "MobiusTransform":
        return cls(1, 0, 0, 1)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.complex128)

    @property
    def determinant(self) -> complex:
        return self.a * self.d - self.b * self.c


def apply(psi: MobiusTransform, z: complex) -> complex:
    """Evaluate on the extended plane; ``complex(inf)`` stands for the point at infinity."""
    z = complex(z)
    if is_infinite(z):
        return psi.a / psi.c if psi.c != 0 else INFINITY
    den = psi.c * z + psi.d
    if den == 0:
        return INFINITY
    return (psi.a * z + psi.b) / den


def apply_many(psi: MobiusTransform, zs: np.ndarray) -> np.ndarray:
    zs = np.asarray(zs, dtype=np.complex128)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = psi.c * zs + psi.d
        out = (psi.a * zs + psi.b) / den
    out[den == 0] = INFINITY
    return out


def inverse(psi: MobiusTransform) -> MobiusTransform:
    return MobiusTransform(psi.d, -psi.b, -psi.c, psi.a)


def compose(outer: MobiusTransform, inner: MobiusTransform) -> MobiusTransform:
    """``outer ∘ inner`` as a 2x2 matrix product."""
    m = outer.matrix @ inner.matrix
    return MobiusTransform(m[0, 0], m[0, 1], m[1, 0], m[1, 1])


@dataclass(frozen=True)
class GeneralizedCircle:
    kind: str
    center: complex = 0j
    radius: float = 0.0
    unit_normal: complex = 1 + 0j
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "circle":
            if not self.radius > 0:
                raise ValueError(f"Circle radius must be > 0, got {self.radius}.")
        elif self.kind == "line":
            if abs(abs(self.unit_normal) - 1.0) > 1e-12:
                raise ValueError("Line normal must have modulus 1.")
        else:
            raise ValueError(f"Unknown generalized circle kind {self.kind!r}.")

    @classmethod
    def circle(cls, center: complex, radius: float) -> "GeneralizedCircle":
        return cls("circle", center=complex(center), radius=float(radius))

    @classmethod
    def line(cls, unit_normal: complex, offset: float) -> "GeneralizedCircle":
        return cls("line", unit_normal=complex(unit_normal), offset=float(offset))

    @property
    def is_line(self) -> bool:
        return self.kind == "line"

    def points(self, m: int, window: float = 1.0, anchor: complex = 0j) -> np.ndarray:
        """Grid on the curve; nested under doubling of ``m``.

        Circles use ``m`` equispaced angles. Lines use ``m + 1`` points over
        ``[-window, window]`` around the projection of ``anchor``.
        """
        if self.kind == "circle":
            theta = 2.0 * np.pi * np.arange(m) / m
            return self.center + self.radius * np.exp(1j * theta)
        normal = self.unit_normal
        along = 1j * normal
        base = self.offset * normal
        shift = ((anchor - base) * np.conj(along)).real
        t = -window + 2.0 * window * np.arange(m + 1) / m
        return base + (shift + t) * along


def preimage_unit_circle(psi: MobiusTransform) -> GeneralizedCircle:
    """``{z : |psi(z)| = 1}`` from ``A|z|^2 + 2 Re(beta z) + C = 0``."""
    a, b, c, d = psi.a, psi.b, psi.c, psi.d
    quad = abs(a) ** 2 - abs(c) ** 2
    beta = a * b.conjugate() - c * d.conjugate()
    const = abs(b) ** 2 - abs(d) ** 2
    if abs(quad) <= LINE_TOLERANCE * max(1.0, abs(a) ** 2 + abs(c) ** 2):
        normal = beta.conjugate() / abs(beta)
        return GeneralizedCircle.line(normal, -const / (2.0 * abs(beta)))
    center = -beta.conjugate() / quad
    radius_sq = abs(beta) ** 2 / quad**2 - const / quad
    return GeneralizedCircle.circle(center, math.sqrt(max(radius_sq, 0.0)))


def log_minus(x: float | np.ndarray) -> float | np.ndarray:
    """``|log x|`` on ``[0, 1]``, zero above; ``log_minus(0) = inf``."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError("log_minus expects nonnegative input.")
    with np.errstate(divide="ignore"):
        out = np.where(arr < 1.0, -np.log(np.where(arr < 1.0, arr, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def log_plus(x: float | np.ndarray) -> float | np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError("log_plus expects nonnegative input.")
    with np.errstate(divide="ignore"):
        out = np.where(arr > 1.0, np.log(np.where(arr > 1.0, arr, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def sample_mobius_coefficients(seed: int, attempt: int = 0) -> tuple[complex, complex, complex, complex]:
    """Raw i.i.d. standard complex Gaussian ``(a, b, c, d)`` before normalization."""
    rng = philox_generator(seed, attempt)
    draws = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / math.sqrt(2.0)
    return tuple(complex(v) for v in draws)  # type: ignore[return-value]


def sample_mobius(seed: int) -> MobiusTransform:
    attempt = 0
    while True:
        a, b, c, d = sample_mobius_coefficients(seed, attempt)
        if abs(a * d - b * c) > SAMPLE_DETERMINANT_FLOOR:
            return MobiusTransform(a, b, c, d)
        attempt += 1


def potential_integral(psi: MobiusTransform, points: np.ndarray) -> float:
    """Mean of ``log_minus |psi(z)|`` over equally weighted atoms."""
    moduli = np.abs(apply_many(psi, np.asarray(points, dtype=np.complex128)))
    return float(np.mean(log_minus(moduli)))


@dataclass(frozen=True)
class CircleMax:
    value: float
    grid_size: int
    stabilized: bool
    argmax: complex


def _grid_max(
    r: RootSet, k: int, curve: GeneralizedCircle, m: int, window: float, anchor: complex
) -> tuple[float, complex]:
    grid = evaluate_sn_many(r, curve.points(m, window, anchor), k)
    idx = int(np.argmax(grid.log_abs))
    return float(grid.log_abs[idx]), complex(grid.points[idx])


def max_log_sn_on_circle(
    r: RootSet,
    k: int,
    curve: GeneralizedCircle,
    m_grid: int = 256,
    max_grid: int = GRID_CAP,
    tolerance: float = STABLE_CHANGE,
) -> CircleMax:
    """Grid maximum of ``log|S_n|`` on a generalized circle, doubled until stable.

    Lines are truncated to ``[-T, T]`` with ``T = 10 (1 + diameter)`` around
    the projection of the root centroid.
    """
    window = 10.0 * (1.0 + r.diameter())
    anchor = r.centroid()
    m = m_grid
    best, argmax = _grid_max(r, k, curve, m, window, anchor)
    while 2 * m <= max_grid:
        refined, refined_at = _grid_max(r, k, curve, 2 * m, window, anchor)
        m *= 2
        change = refined - best
        best, argmax = refined, refined_at
        if not math.isfinite(best) or abs(change) < tolerance:
            return CircleMax(value=best, grid_size=m, stabilized=True, argmax=argmax)
    logger.warning("Circle maximum did not stabilize below %.1e at grid %d.", tolerance, m)
    return CircleMax(value=best, grid_size=m, stabilized=False, argmax=argmax)


def circle_max_upper_bound(r: RootSet, k: int, center: complex, radius: float) -> float:
    """``k log sum_j 1 / |radius - |Z_j - center||``, an upper bound for ``max log|S_n|`` on the circle."""
    gaps = np.abs(radius - np.abs(r.roots - complex(center)))
    if np.any(gaps == 0):
        return math.inf
    return k * math.log(float(np.sum(1.0 / gaps)))


@dataclass(frozen=True)
class JensenAudit:
    lhs: float
    rhs_max_term: float
    rhs_center_term: float
    grid_size: int
    slack: float
    stabilized: bool = True
    rejected: bool = False
    reason: str = ""

    def normalized_gap(self, n: int) -> float:
        return self.lhs / n

    @property
    def center_dominates(self) -> bool:
        """``|S_n(psi^-1(0))| >= 1``, where the circle maximum alone bounds ``lhs``."""
        return not self.rejected and self.rhs_center_term >= 0.0

    @classmethod
    def rejection(cls, reason: str) -> "JensenAudit":
        nan = math.nan
        return cls(nan, nan, nan, 0, nan, stabilized=False, rejected=True, reason=reason)


def jensen_audit(
    r: RootSet,
    k: int,
    psi: MobiusTransform,
    zeros: RootFindResult,
    m_grid: int = 256,
) -> JensenAudit:
    """Both sides of ``sum_rho log_-|psi(rho)| - sum_zeta log_-|psi(zeta)| <= max log|S_n| - log|S_n(psi^-1(0))|``."""
    if not zeros.converged:
        return JensenAudit.rejection("root finding not converged")
    psi_inv = inverse(psi)
    center = apply(psi_inv, 0)
    pole = apply(psi_inv, INFINITY)
    if is_infinite(center):
        return JensenAudit.rejection("psi^-1(0) is the point at infinity")
    points = np.concatenate([r.roots, zeros.zeros])
    for label, target in (("psi^-1(0)", center), ("pole of psi", pole)):
        if not is_infinite(target) and float(np.min(np.abs(points - target))) < COINCIDENCE_TOLERANCE:
            return JensenAudit.rejection(f"{label} coincides with a root or zero")

    lhs = float(
        np.sum(log_minus(np.abs(apply_many(psi, zeros.zeros))))
        - np.sum(log_minus(np.abs(apply_many(psi, r.roots))))
    )
    circle_max = max_log_sn_on_circle(r, k, preimage_unit_circle(psi), m_grid)
    center_term = evaluate_sn(r, center, k).log_abs
    slack = circle_max.value - center_term - lhs
    return JensenAudit(
        lhs=lhs,
        rhs_max_term=circle_max.value,
        rhs_center_term=center_term,
        grid_size=circle_max.grid_size,
        slack=slack,
        stabilized=circle_max.stabilized,
    )
