"""Random-matrix models built from raw windows.

The chain for the ring pipeline is

    raw window  ->  row-standardized matrix  ->  singular-value equivalent
                ->  L-fold product           ->  row-rescaled product

and for the covariance pipeline

    raw window  ->  row-standardized matrix  ->  S = XX^H/T  or  M = XX^H/N.

All variances use the population convention (divisor T), which pins the
realized row variance to exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AspectRatioError,
    ContractError,
    DegenerateRowError,
    ParameterError,
    ShapeError,
)
from .ingest import RawWindow
from .rng import SeedLike, as_generator

DEGENERATE_POLICIES = ("error", "jitter")

# Noise scale injected under policy="jitter" before re-standardizing.
JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class StandardizedMatrix:
    """Row-wise zero-mean unit-variance matrix with aspect ratio c = N/T."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        object.__setattr__(self, "values", v)
        n, t = v.shape
        if n > t:
            raise AspectRatioError(f"rmm: {n} rows exceed {t} columns; need c = N/T <= 1")
        mu = v.mean(axis=1)
        var = (np.abs(v - mu[:, None]) ** 2).mean(axis=1)
        if np.abs(mu).max() > 1e-10 or np.abs(var - 1.0).max() > 1e-8:
            raise ShapeError("rmm: rows are not standardized to mean 0, variance 1")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def c(self) -> float:
        return self.values.shape[0] / self.values.shape[1]


@dataclass(frozen=True)
class RingProduct:
    """Row-rescaled product of L singular-value equivalents (complex N x N)."""

    values: np.ndarray
    L: int
    seed_entropy: Optional[Tuple[int, ...]] = None

    @property
    def N(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CovarianceMatrix:
    """Hermitian covariance under one of the two normalizations.

    convention "S" divides by T; convention "M" divides by N, so M = S/c.
    """

    values: np.ndarray
    convention: str

    def __post_init__(self):
        if self.convention not in ("S", "M"):
            raise ParameterError(f"rmm: unknown covariance convention {self.convention!r}")
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"rmm: covariance must be square, got {v.shape}")
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v - v.conj().T).max() > 1e-12 * scale:
            raise ShapeError("rmm: covariance matrix is not Hermitian")

    @property
    def N(self) -> int:
        return self.values.shape[0]


MatrixLike = Union[np.ndarray, RawWindow]


def _as_array(w: MatrixLike) -> np.ndarray:
    return np.asarray(w.values if isinstance(w, RawWindow) else w, dtype=float)


def standardize(
    w: MatrixLike,
    policy: str = "error",
    seed: SeedLike = None,
) -> StandardizedMatrix:
    """Map each row x to (x - mean(x)) / std(x).

    Invariant under per-row positive affine transforms of the input, which
    is what makes every downstream statistic unit-free. A zero-variance row
    raises under policy="error"; policy="jitter" adds seeded Gaussian noise
    of std JITTER_SCALE * (1 + |mean|) and standardizes the result.
    """
    if policy not in DEGENERATE_POLICIES:
        raise ParameterError(f"rmm: unknown degenerate-row policy {policy!r}")
    X = _as_array(w).copy()
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    flat = np.flatnonzero(sd.ravel() == 0.0)
    if flat.size:
        if policy == "error":
            names = (
                [w.node_ids[i] for i in flat] if isinstance(w, RawWindow) else list(flat)
            )
            raise DegenerateRowError(f"rmm: zero-variance rows: {names}")
        rng = as_generator(seed)
        noise = rng.normal(0.0, 1.0, size=(flat.size, X.shape[1]))
        X[flat] += JITTER_SCALE * (1.0 + np.abs(mu[flat])) * noise
        mu = X.mean(axis=1, keepdims=True)
        sd = X.std(axis=1, keepdims=True)
    out = (X - mu) / sd
    # second centering pass flushes the O(mean * eps) cancellation residue
    out -= out.mean(axis=1, keepdims=True)
    return StandardizedMatrix(out)


def haar_unitary(n: int, seed: SeedLike) -> np.ndarray:
    """Haar-distributed n x n unitary.

    QR of a complex Ginibre matrix with the usual diagonal phase fix: plain
    orthonormalization alone is not Haar-distributed, so each column of Q is
    rescaled by the unit-modulus phase of the matching R diagonal entry,
    making the factorization unique.
    """
    if n < 1:
        raise ParameterError(f"rmm: unitary dimension must be >= 1, got {n}")
    rng = as_generator(seed)
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _hermitian_sqrt(h: np.ndarray) -> np.ndarray:
    """PSD square root by eigendecomposition, clamping roundoff negatives."""
    h = (h + h.conj().T) / 2.0
    w, v = np.linalg.eigh(h)
    clamp = 1e-12 * max(w[-1], 0.0)
    w = np.where(w < clamp, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def singular_value_equivalent(
    x: Union[StandardizedMatrix, np.ndarray], seed: SeedLike
) -> np.ndarray:
    """The square matrix sqrt(XX^H) U sharing X's singular values, U Haar."""
    X = x.values if isinstance(x, StandardizedMatrix) else np.asarray(x)
    h = X @ X.conj().T
    return _hermitian_sqrt(h) @ haar_unitary(X.shape[0], seed)


def ring_product(windows: Sequence[StandardizedMatrix], seed: SeedLike) -> RingProduct:
    """Product of singular-value equivalents with row rescaling.

    Each row z of the product is scaled to z / (sqrt(N) std(z)). The row
    mean enters only through std(z); it is NOT subtracted from the row.
    Subtracting it would right-multiply the product by the projector
    complementary to the all-ones vector and pin one eigenvalue at zero,
    visibly denting the inner edge of the spectrum at moderate N.
    """
    windows = list(windows)
    if not windows:
        raise ParameterError("rmm: ring product needs at least one window")
    n = windows[0].N
    for wdw in windows[1:]:
        if wdw.N != n:
            raise ShapeError(f"rmm: window row counts differ: {wdw.N} vs {n}")
    rng = as_generator(seed)
    z = None
    for wdw in windows:
        xu = singular_value_equivalent(wdw, rng)
        z = xu if z is None else z @ xu
    mu = z.mean(axis=1, keepdims=True)
    sd = np.sqrt((np.abs(z - mu) ** 2).mean(axis=1, keepdims=True))
    if (sd == 0).any():
        raise DegenerateRowError("rmm: ring product produced a constant row")
    return RingProduct(z / (np.sqrt(n) * sd), L=len(windows), seed_entropy=_entropy_of(seed))


def _entropy_of(seed: SeedLike) -> Optional[Tuple[int, ...]]:
    """Best-effort record of the entropy behind a seed, for provenance."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    if isinstance(seed, (list, tuple)):
        return tuple(int(s) for s in seed)
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        if isinstance(ent, (int, np.integer)):
            return (int(ent),)
        if ent is not None:
            return tuple(int(e) for e in np.atleast_1d(ent))
    return None


def covariance(x: StandardizedMatrix, convention: str = "M") -> CovarianceMatrix:
    """Covariance S = XX^H/T or M = XX^H/N = S/c, symmetrized before return."""
    if convention not in ("S", "M"):
        raise ParameterError(f"rmm: unknown covariance convention {convention!r}")
    X = x.values
    h = X @ X.conj().T
    h = (h + h.conj().T) / 2.0
    h /= x.T if convention == "S" else x.N
    return CovarianceMatrix(h, convention)


def augment(
    basic: MatrixLike,
    factors: Union[np.ndarray, Sequence[float]],
    repeat: int = 1,
) -> Union[np.ndarray, RawWindow]:
    """Stack a factor block under a status block, replicating it `repeat` times.

    Replication adjusts the factor rows' weight in the fused model.
    Standardization happens downstream, on the stacked window.
    """
    if repeat < 1:
        raise ParameterError(f"rmm: repeat must be >= 1, got {repeat}")
    fac = np.atleast_2d(np.asarray(factors, dtype=float))
    base = _as_array(basic)
    if fac.shape[1] != base.shape[1]:
        raise ShapeError(
            f"rmm: factor block has {fac.shape[1]} columns, status block {base.shape[1]}"
        )
    stacked = np.vstack([base] + [fac] * repeat)
    if isinstance(basic, RawWindow):
        fac_ids = [
            f"factor{i + 1}r{k}" if repeat > 1 else f"factor{i + 1}"
            for k in range(repeat)
            for i in range(fac.shape[0])
        ]
        clash = set(fac_ids) & set(basic.node_ids)
        if clash:
            raise ContractError(f"rmm: factor ids collide with node ids: {sorted(clash)}")
        return RawWindow(stacked, basic.node_ids + tuple(fac_ids), basic.timestamps, basic.end_index)
    return stacked
