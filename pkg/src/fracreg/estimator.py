"""Projection of responses onto leading Laplacian eigenvectors, with tuning.

The fitted vector is the empirical-orthogonal projection of Y onto the span
of the first K eigenvectors; K and the bandwidth come either from the
closed-form tuning rule or from a grid search against a known truth.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from fracreg.errors import InvalidInputError, TuningError
from fracreg.graph import KernelSpec, NeighborGraph, SampleSet, build_graph, connectivity_check
from fracreg.spectral import EigenSystem, eigensolve, laplacian


class DisconnectedGraphWarning(UserWarning):
    """The graph at the requested bandwidth is disconnected.

    Fits still proceed: extra zero eigenvalues only enlarge the constant-like
    span.  The bandwidth lower bound makes connectivity probable, not certain.
    """


@dataclass(frozen=True)
class TuningRule:
    """Smoothness order s in (0,1), radius M > 0, dimension, window constants."""

    s: float
    M: float
    dim: int
    c0: float = 1.0
    C0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InvalidInputError("s must lie in (0, 1)")
        if not self.M > 0:
            raise InvalidInputError("M must be positive")
        if self.dim < 1:
            raise InvalidInputError("dimension must be at least 1")
        if not (self.c0 > 0 and self.C0 > 0):
            raise InvalidInputError("window constants c0, C0 must be positive")


def _snap_floor(x: float, rel: float = 1e-9) -> int:
    # floor with a snap to the nearest integer when x sits within float noise
    # of it, so exact-integer powers are not lost to rounding.
    r = round(x)
    if abs(x - r) <= rel * max(1.0, abs(x)):
        return int(r)
    return int(math.floor(x))


def choose_K(rule: TuningRule, n: int) -> int:
    """min{ floor((M^2 n)^(d/(2s+d))) or 1, n }."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    x = (rule.M ** 2 * n) ** (rule.dim / (2.0 * rule.s + rule.dim))
    return min(max(_snap_floor(x), 1), n)


def choose_epsilon(rule: TuningRule, n: int, K: int) -> float:
    """Geometric midpoint of [c0 (log n / n)^(1/d), C0 K^(-1/d)].

    Raises TuningError when the window is empty.
    """
    if n < 2:
        raise InvalidInputError("n must be at least 2")
    if K < 1:
        raise InvalidInputError("K must be at least 1")
    lo = rule.c0 * (math.log(n) / n) ** (1.0 / rule.dim)
    hi = rule.C0 * K ** (-1.0 / rule.dim)
    if lo > hi:
        raise TuningError(
            "empty bandwidth window [%.6g, %.6g]: increase C0 or decrease c0" % (lo, hi)
        )
    return math.sqrt(lo * hi)


@dataclass(frozen=True)
class RegressionFit:
    """In-sample fit: fitted values, chosen K and bandwidth, diagnostics."""

    fitted: np.ndarray
    K: int
    epsilon: float
    projections: np.ndarray
    eig: EigenSystem
    connected: bool
    component_count: int

    def save_csv(self, path, samples: SampleSet, metadata: dict | None = None):
        """Row per sample (index, coordinates, Y, fitted); metadata header lines."""
        with open(path, "w", newline="") as fh:
            meta = {"K": self.K, "epsilon": self.epsilon}
            meta.update(metadata or {})
            for key, val in meta.items():
                if isinstance(val, float):
                    val = format(val, ".17g")
                fh.write("# %s = %s\n" % (key, val))
            writer = csv.writer(fh)
            writer.writerow(
                ["index"]
                + ["x%d" % (j + 1) for j in range(samples.dim)]
                + ["y", "fitted"]
            )
            y = samples.responses
            for i in range(samples.n):
                row = [str(i + 1)]
                row += [format(v, ".17g") for v in samples.points[i]]
                row.append(format(y[i], ".17g") if y is not None else "")
                row.append(format(self.fitted[i], ".17g"))
                writer.writerow(row)


def _project(eig: EigenSystem, y: np.ndarray, K: int):
    coef = eig.coefficients(y)[:K]
    fitted = eig.vectors[:, :K] @ coef if K > 0 else np.zeros(eig.n)
    return fitted, coef


def fit(samples: SampleSet, K: int, epsilon: float, kernel: KernelSpec) -> RegressionFit:
    """Project the responses onto the first K eigenvectors at bandwidth epsilon.

    K = 0 yields the zero fit; K = n reproduces the responses exactly.
    Connectivity is reported (a warning on disconnection), never required.
    """
    if samples.responses is None:
        raise InvalidInputError("samples must carry responses")
    n = samples.n
    if not 0 <= K <= n:
        raise InvalidInputError("K must lie in [0, n]")
    graph = build_graph(samples, epsilon, kernel)
    report = connectivity_check(graph)
    if not report.connected:
        warnings.warn(
            "graph at epsilon=%.6g has %d components" % (epsilon, report.component_count),
            DisconnectedGraphWarning,
            stacklevel=2,
        )
    op = laplacian(graph, samples.dim)
    eig = eigensolve(op, max(K, 1))
    fitted, coef = _project(eig, samples.responses, K)
    return RegressionFit(
        fitted=fitted,
        K=K,
        epsilon=float(epsilon),
        projections=coef,
        eig=eig,
        connected=report.connected,
        component_count=report.component_count,
    )


@dataclass(frozen=True)
class GridSearchResult:
    best_K: int
    best_epsilon: float
    best_mse: float
    K_grid: tuple
    eps_grid: tuple
    mse_surface: np.ndarray  # shape (len(K_grid), len(eps_grid))

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["K", "epsilon", "mse"])
            for i, K in enumerate(self.K_grid):
                for j, eps in enumerate(self.eps_grid):
                    writer.writerow(
                        [str(K), format(eps, ".17g"), format(self.mse_surface[i, j], ".17g")]
                    )


def grid_search(
    samples: SampleSet,
    K_grid,
    eps_grid,
    kernel: KernelSpec,
    truth: np.ndarray,
) -> GridSearchResult:
    """In-sample MSE |f_hat - truth|_n^2 over every (K, epsilon) grid pair.

    Each bandwidth needs one eigensystem; nested K values reuse it through
    cumulative projections.  Ties break toward smaller K, then smaller epsilon.
    """
    K_grid = [int(k) for k in K_grid]
    eps_grid = [float(e) for e in eps_grid]
    if not K_grid or not eps_grid:
        raise InvalidInputError("grids must be non-empty")
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (samples.n,):
        raise InvalidInputError("truth must have length n=%d" % samples.n)
    if samples.responses is None:
        raise InvalidInputError("samples must carry responses")
    if min(K_grid) < 0 or max(K_grid) > samples.n:
        raise InvalidInputError("K grid entries must lie in [0, n]")

    n = samples.n
    y = samples.responses
    mmax = max(max(K_grid), 1)
    order = np.argsort(K_grid, kind="stable")
    surface = np.empty((len(K_grid), len(eps_grid)))
    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DisconnectedGraphWarning)
        for j, eps in enumerate(eps_grid):
            graph = build_graph(samples, eps, kernel)
            eig = eigensolve(laplacian(graph, samples.dim), min(mmax, n))
            coef = eig.coefficients(y)
            fhat = np.zeros(n)
            done = 0
            for idx in order:
                K = K_grid[idx]
                while done < K:
                    fhat = fhat + coef[done] * eig.vectors[:, done]
                    done += 1
                mse = float(np.mean((fhat - truth) ** 2))
                surface[idx, j] = mse
                key = (mse, K, eps)
                if best is None or key < best:
                    best = key
    return GridSearchResult(
        best_K=best[1],
        best_epsilon=best[2],
        best_mse=best[0],
        K_grid=tuple(K_grid),
        eps_grid=tuple(eps_grid),
        mse_surface=surface,
    )


@dataclass(frozen=True)
class BiasVariance:
    bias_sq: float
    variance_proxy: float


def bias_variance_decompose(fit_result: RegressionFit, truth: np.ndarray) -> BiasVariance:
    """Split the error against a known truth at the fitted projection rank.

    bias_sq is the squared empirical norm of the truth outside the K-span
    (the complement formula, valid for any computed m >= K); variance_proxy
    is the realized noise energy inside the span.
    """
    truth = np.asarray(truth, dtype=float)
    eig = fit_result.eig
    if truth.shape != (eig.n,):
        raise InvalidInputError("truth must have length n=%d" % eig.n)
    K = fit_result.K
    proj_truth, _ = _project(eig, truth, K)
    bias_sq = float(np.mean((truth - proj_truth) ** 2))
    variance_proxy = float(np.mean((fit_result.fitted - proj_truth) ** 2))
    return BiasVariance(bias_sq=bias_sq, variance_proxy=variance_proxy)
