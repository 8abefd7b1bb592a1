"""Zeros of P_n^(k) from root data, plus extended-precision oracles.

The solver is an Aberth-Ehrlich simultaneous iteration whose Newton ratio
comes from ``polynomial.newton_parts``. Roots of multiplicity ``m > k`` are
zeros of P^(k) of multiplicity ``m - k``; those are placed exactly and
divided out of the iteration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .polynomial import DIVISION_FLOOR, RootSet, evaluate_sn_many, newton_parts
from .sampling import philox_generator

logger = logging.getLogger("critlab.rootfinding")

MAX_ORACLE_DEGREE = 128
JITTER = 1e-3
POLISH_STEPS = 5
_PAIR_CHUNK = 2**20


class NonConvergenceError(RuntimeError):
    """Raised when a consumer needs converged zeros and the solver did not deliver them."""


class ContourTooCloseError(ValueError):
    """Raised when a zero or pole lies too close to an argument-principle contour."""


@dataclass(frozen=True)
class AberthOptions:
    max_sweeps: int = 200
    tol_root: float = 1e-11
    restarts: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1.")
        if not self.tol_root > 0:
            raise ValueError("tol_root must be > 0.")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1.")


@dataclass(frozen=True, eq=False)
class RootFindResult:
    zeros: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


@dataclass(frozen=True, eq=False)
class _FixedZeros:
    centers: np.ndarray
    orders: np.ndarray
    zeros: np.ndarray


def _fixed_zeros(roots: np.ndarray, k: int) -> tuple[_FixedZeros, np.ndarray]:
    """Split repeated roots into exact zeros of P^(k) and warm-start candidates."""
    distinct, counts = np.unique(roots, return_counts=True)
    heavy = counts > k
    centers = distinct[heavy]
    orders = (counts[heavy] - k).astype(float)
    fixed = np.repeat(centers, (counts[heavy] - k).astype(int))
    candidates = np.repeat(distinct, np.minimum(counts, k))
    return _FixedZeros(centers=centers, orders=orders, zeros=fixed), candidates


def _deflated_ratio(roots: np.ndarray, z: np.ndarray, k: int, fixed: _FixedZeros) -> np.ndarray:
    value, derivative, _ = newton_parts(roots, z, k)
    if fixed.centers.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = (fixed.orders[None, :] / (z[:, None] - fixed.centers[None, :])).sum(axis=1)
        derivative = derivative - value * shift
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = value / derivative
    ratio[np.abs(derivative) < DIVISION_FLOOR] = np.nan
    return ratio


def _repulsion(z: np.ndarray) -> np.ndarray:
    """``sum_{j != i} 1 / (z_i - z_j)`` for every iterate."""
    out = np.empty(z.size, dtype=np.complex128)
    step = max(1, _PAIR_CHUNK // max(z.size, 1))
    for start in range(0, z.size, step):
        diff = z[start:start + step, None] - z[None, :]
        idx = np.arange(diff.shape[0])
        diff[idx, start + idx] = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            out[start:start + step] = (1.0 / diff).sum(axis=1)
    return out


def _initial_guess(
    candidates: np.ndarray, count: int, scale: float, rng: np.random.Generator
) -> np.ndarray:
    centroid = candidates.mean()
    order = np.argsort(np.abs(candidates - centroid), kind="stable")
    chosen = candidates[order[:count]]
    jitter = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return chosen + JITTER * scale * jitter / math.sqrt(2.0)


def _aberth(
    roots: np.ndarray,
    k: int,
    z: np.ndarray,
    fixed: _FixedZeros,
    opts: AberthOptions,
    scale: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int, bool]:
    sweeps = 0
    for sweeps in range(1, opts.max_sweeps + 1):
        ratio = _deflated_ratio(roots, z, k, fixed)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            correction = ratio / (1.0 - ratio * _repulsion(z))
        bad = ~np.isfinite(correction)
        if bad.any():
            kick = rng.standard_normal(int(bad.sum())) + 1j * rng.standard_normal(int(bad.sum()))
            correction[bad] = JITTER * scale * kick
        z = z - correction
        if not bad.any() and np.all(np.abs(correction) < opts.tol_root * (1.0 + np.abs(z))):
            return z, sweeps, True
    return z, sweeps, False


def _polish(
    roots: np.ndarray, k: int, z: np.ndarray, fixed: _FixedZeros
) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(POLISH_STEPS):
        ratio = _deflated_ratio(roots, z, k, fixed)
        finite = np.isfinite(ratio)
        z = np.where(finite, z - np.where(finite, ratio, 0.0), z)
    residuals = np.abs(_deflated_ratio(roots, z, k, fixed))
    residuals[~np.isfinite(residuals)] = np.inf
    return z, residuals


def derivative_zeros(r: RootSet, k: int, opts: AberthOptions | None = None) -> RootFindResult:
    """All ``n - k`` zeros of P_n^(k), counted with multiplicity."""
    opts = opts or AberthOptions()
    if not 1 <= k < r.n:
        raise ValueError(f"Need 1 <= k < n, got k={k}, n={r.n}.")
    roots = r.roots
    fixed, candidates = _fixed_zeros(roots, k)
    free = r.n - k - fixed.zeros.size
    if free == 0:
        return RootFindResult(
            zeros=fixed.zeros.copy(), residuals=np.zeros(fixed.zeros.size), iterations=0, converged=True
        )

    scale = max(r.diameter(), 1e-300)
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    iterations = 0
    converged = False
    for attempt in range(opts.restarts):
        rng = philox_generator(opts.seed, attempt)
        z0 = _initial_guess(candidates, free, scale, rng)
        z, sweeps, settled = _aberth(roots, k, z0, fixed, opts, scale, rng)
        z, residuals = _polish(roots, k, z, fixed)
        iterations += sweeps
        worst = float(np.max(residuals / (1.0 + np.abs(z))))
        if best is None or worst < best[0]:
            best = (worst, z, residuals)
        converged = settled and bool(np.all(np.isfinite(z))) and worst < opts.tol_root
        if converged:
            break
        logger.warning(
            "Aberth attempt %d/%d did not converge for n=%d k=%d (worst residual %.3e).",
            attempt + 1, opts.restarts, r.n, k, worst,
        )

    assert best is not None
    _, z, residuals = best
    if not converged:
        logger.error("Root finding failed for n=%d k=%d after %d attempts.", r.n, k, opts.restarts)
    return RootFindResult(
        zeros=np.concatenate([fixed.zeros, z]),
        residuals=np.concatenate([np.zeros(fixed.zeros.size), residuals]),
        iterations=iterations,
        converged=converged,
    )


def expand_coefficients(r: RootSet, precision_bits: int = 512) -> list[mpmath.mpc]:
    """Monomial coefficients ``c_0..c_n`` of P_n, multiplied out one linear factor at a time."""
    if r.n > MAX_ORACLE_DEGREE:
        raise ValueError(f"Coefficient expansion supports n <= {MAX_ORACLE_DEGREE}, got {r.n}.")
    with mpmath.workprec(precision_bits):
        coeffs = [mpmath.mpc(1)]
        for root in r.roots:
            zr = mpmath.mpc(root.real, root.imag)
            grown = [mpmath.mpc(0)] * (len(coeffs) + 1)
            for i, c in enumerate(coeffs):
                grown[i + 1] += c
                grown[i] -= zr * c
            coeffs = grown
    return coeffs


def differentiate_coefficients(coeffs: list[mpmath.mpc], k: int, precision_bits: int = 512) -> list[mpmath.mpc]:
    with mpmath.workprec(precision_bits):
        return [coeffs[j + k] * math.perm(j + k, k) for j in range(len(coeffs) - k)]


def _horner(coeffs: list[mpmath.mpc], z: mpmath.mpc) -> tuple[mpmath.mpc, mpmath.mpc]:
    value = mpmath.mpc(0)
    derivative = mpmath.mpc(0)
    for c in reversed(coeffs):
        derivative = derivative * z + value
        value = value * z + c
    return value, derivative


def _newton_mp(coeffs: list[mpmath.mpc], z: mpmath.mpc, steps: int, eps: mpmath.mpf) -> mpmath.mpc:
    for _ in range(steps):
        value, derivative = _horner(coeffs, z)
        if derivative == 0:
            break
        step = value / derivative
        z -= step
        if abs(step) <= eps * (1 + abs(z)):
            break
    return z


def oracle_derivative_zeros(r: RootSet, k: int, precision_bits: int = 512) -> np.ndarray:
    """Zeros of P^(k) by Newton with deflation on extended-precision coefficients."""
    if not 1 <= k < r.n:
        raise ValueError(f"Need 1 <= k < n, got k={k}, n={r.n}.")
    coeffs = differentiate_coefficients(expand_coefficients(r, precision_bits), k, precision_bits)
    starts = np.roots([complex(c) for c in reversed(coeffs)])
    starts = starts[np.argsort(np.abs(starts), kind="stable")]
    found: list[mpmath.mpc] = []
    with mpmath.workprec(precision_bits):
        eps = mpmath.mpf(2) ** (-(precision_bits // 2))
        work = list(coeffs)
        for start in starts:
            z = _newton_mp(work, mpmath.mpc(start.real, start.imag), 200, eps)
            found.append(z)
            # synthetic division by (x - z), highest degree first
            quotient = [mpmath.mpc(0)] * (len(work) - 1)
            carry = mpmath.mpc(0)
            for i in range(len(work) - 1, 0, -1):
                carry = carry * z + work[i]
                quotient[i - 1] = carry
            work = quotient
        polished = [_newton_mp(coeffs, z, 20, eps) for z in found]
    return np.array([complex(z) for z in polished], dtype=np.complex128)


def count_zeros_argument_principle(
    r: RootSet,
    k: int,
    center: complex,
    radius: float,
    m_samples: int = 64,
    zeros: np.ndarray | None = None,
    max_samples: int = 2**20,
) -> int:
    """Number of zeros of P^(k) inside ``C(center, radius)``, with multiplicity.

    P^(k) = k! S_n P_n, so the count is the winding of S_n plus the roots inside.
    """
    if m_samples < 64:
        raise ValueError(f"m_samples must be >= 64, got {m_samples}.")
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}.")
    center = complex(center)
    guard = 1e-6 * radius
    if np.min(np.abs(np.abs(r.roots - center) - radius)) < guard:
        raise ContourTooCloseError("A root of P_n lies within 1e-6 radius of the contour.")
    if zeros is not None and zeros.size:
        if np.min(np.abs(np.abs(zeros - center) - radius)) < guard:
            raise ContourTooCloseError("A zero of P^(k) lies within 1e-6 radius of the contour.")
    inside = int(np.count_nonzero(np.abs(r.roots - center) < radius))

    previous: int | None = None
    m = m_samples
    while m <= max_samples:
        theta = 2.0 * np.pi * np.arange(m + 1) / m
        grid = evaluate_sn_many(r, center + radius * np.exp(1j * theta), k)
        if np.any(grid.values == 0) or np.any(grid.is_pole):
            raise ContourTooCloseError("S_n vanishes or has a pole on the contour.")
        phase = np.unwrap(np.angle(grid.values))
        winding = int(round((phase[-1] - phase[0]) / (2.0 * np.pi)))
        resolved = float(np.max(np.abs(np.diff(phase)))) < np.pi / 2
        if resolved and winding == previous:
            return inside + winding
        previous = winding
        m *= 2
    raise ContourTooCloseError(f"Winding number did not stabilize within {max_samples} samples.")


def certify(r: RootSet, k: int, result: RootFindResult, m_samples: int = 64) -> bool:
    """Converged and the zero count over a hull-enclosing disk equals ``n - k``."""
    if not result.converged:
        return False
    center = r.centroid()
    radius = float(np.max(np.abs(r.roots - center))) + 1.0
    try:
        count = count_zeros_argument_principle(r, k, center, radius, m_samples, zeros=result.zeros)
    except ContourTooCloseError as exc:
        logger.warning("Certification contour rejected: %s", exc)
        return False
    if count != r.n - k:
        logger.warning("Argument principle counted %d zeros, expected %d.", count, r.n - k)
        return False
    return True
