"""Exact sampling of fractional Brownian motion on the grid {l/n, l = 0..n}.

Random numbers come from numpy's counter-based Philox generator keyed by a
64-bit seed, and Gaussian variates are produced by the Box-Muller transform
from Philox uniforms.  A path is therefore a pure function of
``(hurst, n, seed, method)`` and can be regenerated on any worker.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

METHODS = ("circulant", "cholesky", "auto")
CHOLESKY_MAX_N = 2 ** 12
_MASK64 = (1 << 64) - 1


class EmbeddingError(ValueError):
    """Circulant embedding of the fGn covariance is not nonnegative definite."""


def _check_hurst(hurst: float):
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"Hurst index must lie in (0, 1), got {hurst}")


def covariance(hurst: float, s: float, t: float) -> float:
    """Cov(B_s, B_t) = (s^2H + t^2H - |t - s|^2H) / 2."""
    _check_hurst(hurst)
    h2 = 2.0 * hurst
    return 0.5 * (abs(s) ** h2 + abs(t) ** h2 - abs(t - s) ** h2)


def fgn_autocovariance(hurst: float, k) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lag ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def derive_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for ``(base_seed, *keys)``."""
    ss = np.random.SeedSequence(int(base_seed) & _MASK64,
                                spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def standard_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Box-Muller normals from ``ceil(size/2)`` pairs of uniforms."""
    k = (size + 1) // 2
    u1 = 1.0 - rng.random(k)  # (0, 1], keeps log finite
    u2 = rng.random(k)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * k)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:size]


@lru_cache(maxsize=64)
def _circulant_sqrt_eigs(hurst: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n
    eigs = np.fft.fft(row).real
    tol = 1e-10 * max(1.0, float(np.max(np.abs(eigs))))
    if eigs.min() < -tol:
        raise EmbeddingError(
            f"circulant embedding has eigenvalue {eigs.min():.3e} "
            f"for H={hurst}, n={n}")
    eigs = np.clip(eigs, 0.0, None)
    out = np.sqrt(eigs / (2 * n))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=16)
def _cholesky_factor(hurst: float, n: int) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    cov = fgn_autocovariance(hurst, lags)
    out = np.linalg.cholesky(cov)
    out.flags.writeable = False
    return out


def _increments_circulant(hurst: float, n: int, seeds) -> np.ndarray:
    lam = _circulant_sqrt_eigs(hurst, n)
    z = np.empty((len(seeds), 2 * n), dtype=complex)
    for i, seed in enumerate(seeds):
        g = standard_normals(make_rng(seed), 4 * n)
        z[i].real = g[: 2 * n]
        z[i].imag = g[2 * n:]
    y = np.fft.fft(lam * z, axis=1)
    return y.real[:, :n] * float(n) ** (-hurst)


def _increments_cholesky(hurst: float, n: int, seeds) -> np.ndarray:
    factor = _cholesky_factor(hurst, n)
    g = np.stack([standard_normals(make_rng(seed), n) for seed in seeds])
    return (g @ factor.T) * float(n) ** (-hurst)


def sample_increments(hurst: float, n: int, seeds, method: str = "circulant",
                      allow_large: bool = False) -> np.ndarray:
    """Fractional Gaussian noise with step 1/n, one row per seed."""
    _check_hurst(hurst)
    if n < 1:
        raise ValueError("n must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    seeds = [int(s) for s in seeds]
    if method == "auto":
        try:
            return _increments_circulant(hurst, n, seeds)
        except EmbeddingError:
            method = "cholesky"
            allow_large = True
    if method == "circulant":
        return _increments_circulant(hurst, n, seeds)
    if n > CHOLESKY_MAX_N and not allow_large:
        raise ValueError(f"cholesky sampler limited to n <= {CHOLESKY_MAX_N} "
                         "without allow_large=True")
    return _increments_cholesky(hurst, n, seeds)


def sample_values(hurst: float, n: int, seeds, method: str = "circulant",
                  allow_large: bool = False) -> np.ndarray:
    """Batch of paths as an array of shape (len(seeds), n + 1)."""
    inc = sample_increments(hurst, n, seeds, method, allow_large)
    values = np.zeros((inc.shape[0], n + 1))
    np.cumsum(inc, axis=1, out=values[:, 1:])
    return values


@dataclass(frozen=True, eq=False)
class FbmPath:
    hurst: float
    n: int
    values: np.ndarray
    seed: int = 0
    method: str = "circulant"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.n + 1,):
            raise ValueError(f"expected {self.n + 1} values, got {values.shape}")
        if values[0] != 0.0:
            raise ValueError("a path must start at B_0 = 0")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def endpoint(self) -> float:
        return float(self.values[-1])

    def subsample(self, n: int) -> "FbmPath":
        """The same path observed on the coarser grid {l/n}."""
        if self.n % n:
            raise ValueError(f"{n} does not divide {self.n}")
        return FbmPath(self.hurst, n, self.values[:: self.n // n], self.seed,
                       self.method)


def sample_path(hurst: float, n: int, seed: int, method: str = "circulant",
                allow_large: bool = False) -> FbmPath:
    values = sample_values(hurst, n, [seed], method, allow_large)[0]
    return FbmPath(hurst, n, values, int(seed), method)


def max_increment(p: FbmPath) -> float:
    inc = p.increments
    return float(np.max(np.abs(inc))) if inc.size else 0.0


def write_path_csv(p: FbmPath, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "B"])
    for t, b in zip(p.times, p.values):
        w.writerow([f"{t:.17g}", f"{b:.17g}"])
