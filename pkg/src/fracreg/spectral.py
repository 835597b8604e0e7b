"""Scaled unnormalized graph Laplacian, its eigensystem, and spectral calculus.

The operator is L = (D - W) / (n eps^(d+2)).  Eigenvectors follow the
empirical normalization: |v|_n = 1, i.e. the plain Euclidean norm is sqrt(n),
and inner products below are <u, v>_n = <u, v> / n throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from fracreg.errors import InvalidInputError, SolverError
from fracreg.graph import NeighborGraph

# Dense symmetric solver at or below this size; iterative Krylov above.
# The dense path doubles as the oracle for the iterative one.
DENSE_LIMIT = 512

# Eigenvalues in [-CLAMP_TOL, 0) are treated as zero before fractional powers.
CLAMP_TOL = 1e-10

_RESIDUAL_TOL = 1e-8
_ZERO_EIGEN_TOL = 1e-8


@dataclass(frozen=True)
class LaplacianOperator:
    """Matrix form of u -> (1/(n eps^(d+2))) sum_j w_ij (u_i - u_j)."""

    graph: NeighborGraph
    dim: int
    matrix: sparse.csr_matrix

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def epsilon(self) -> float:
        return self.graph.epsilon

    @property
    def scale(self) -> float:
        return 1.0 / (self.graph.n * self.graph.epsilon ** (self.dim + 2))

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def laplacian(graph: NeighborGraph, dim: int) -> LaplacianOperator:
    if dim < 1:
        raise InvalidInputError("dimension must be at least 1")
    scale = 1.0 / (graph.n * graph.epsilon ** (dim + 2))
    mat = (sparse.diags(graph.degree) - graph.weights) * scale
    return LaplacianOperator(graph=graph, dim=dim, matrix=mat.tocsr())


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues with |.|_n-orthonormal eigenvectors.

    vectors has shape (n, m) with column 2-norms equal to sqrt(n).
    """

    values: np.ndarray
    vectors: np.ndarray
    n: int

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Empirical inner products <u, v_i>_n for every computed pair."""
        return self.vectors.T @ np.asarray(u, dtype=float) / self.n

    def save_csv(self, path):
        """One row per pair: index, eigenvalue, then the n vector entries."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "eigenvalue"] + ["v%d" % (i + 1) for i in range(self.n)])
            for k in range(self.m):
                row = [str(k + 1), format(self.values[k], ".17g")]
                row += [format(v, ".17g") for v in self.vectors[:, k]]
                writer.writerow(row)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Deterministic output: largest-magnitude entry of each column positive.
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _canonicalize_kernel_cluster(values: np.ndarray, vectors: np.ndarray, n: int):
    """Rotate the near-zero eigenvalue cluster so the constant comes first.

    The Laplacian kernel always contains the constant vector; intra-cluster
    rotation is free, so fixing the first basis vector to the constant makes
    output deterministic even for disconnected graphs.
    """
    c = int(np.sum(values <= _ZERO_EIGEN_TOL))
    if c == 0:
        return vectors
    Q = vectors[:, :c]
    ones = np.ones(n)
    coef = Q.T @ ones / n
    proj = Q @ coef
    pnorm = np.sqrt(np.mean(proj * proj))
    if pnorm < 1.0 - 1e-6:
        # Constant not (fully) inside the computed span: the cluster was
        # truncated by the requested m.  Leave the basis as computed.
        return vectors
    b1 = proj / pnorm
    if c > 1:
        rest = Q - np.outer(b1, b1 @ Q / n)
        u, _, _ = np.linalg.svd(rest / np.sqrt(n), full_matrices=False)
        newQ = np.column_stack([b1] + [u[:, : c - 1] * np.sqrt(n)])
    else:
        newQ = b1[:, None]
    out = vectors.copy()
    out[:, :c] = newQ
    return out


def eigensolve(op: LaplacianOperator, m: int, method: str = "auto") -> EigenSystem:
    """Compute the m algebraically smallest eigenpairs of the operator.

    method is "auto" (dense at or below DENSE_LIMIT, Krylov shift-invert
    above), or "dense" / "iterative" to force a path.  The iterative path
    cannot produce a complete basis, so m >= n - 1 falls back to dense.
    Raises SolverError carrying the worst residual on non-convergence.
    """
    n = op.n
    if not 1 <= m <= n:
        raise InvalidInputError("m must lie in [1, n]")
    if method not in ("auto", "dense", "iterative"):
        raise InvalidInputError("method must be auto, dense, or iterative")
    use_dense = method == "dense" or (method == "auto" and (n <= DENSE_LIMIT or m >= n - 1))
    if method == "iterative" and m >= n - 1:
        raise InvalidInputError("iterative solver requires m <= n - 2")

    if use_dense:
        values, vecs = np.linalg.eigh(op.dense())
        values, vecs = values[:m], vecs[:, :m]
    else:
        diag = op.matrix.diagonal()
        shift = -1e-3 * (float(np.mean(diag)) + 1e-30)
        v0 = np.random.Generator(np.random.Philox(key=0x5EED0F00D)).standard_normal(n)
        try:
            values, vecs = spla.eigsh(op.matrix, k=m, sigma=shift, which="LM", v0=v0)
        except spla.ArpackNoConvergence as exc:
            worst = None
            if exc.eigenvalues is not None and len(exc.eigenvalues):
                ev, evec = exc.eigenvalues, exc.eigenvectors
                res = np.linalg.norm(op.matrix @ evec - evec * ev, axis=0)
                worst = float(np.max(res)) / np.sqrt(n)
            raise SolverError(
                "eigensolver failed to converge within the iteration budget "
                "(worst residual %s)" % worst,
                worst_residual=worst,
            ) from exc
        order = np.argsort(values)
        values, vecs = values[order], vecs[:, order]

    # Round-off on the provably-zero kernel eigenvalue would be amplified by
    # fractional powers later; snap the near-zero part of the spectrum to 0.
    snap = 1e-12 * max(1.0, float(values[-1]))
    values = np.where(np.abs(values) <= snap, 0.0, values)

    vectors = vecs * np.sqrt(n)  # |v|_n = 1
    vectors = _canonicalize_kernel_cluster(values, vectors, n)
    vectors = _fix_signs(vectors)

    residuals = np.linalg.norm(op.matrix @ vectors - vectors * values, axis=0) / np.sqrt(n)
    worst = float(np.max(residuals))
    if worst > _RESIDUAL_TOL:
        raise SolverError(
            "eigenpair residual %.3e exceeds tolerance %.1e" % (worst, _RESIDUAL_TOL),
            worst_residual=worst,
        )
    return EigenSystem(values=np.asarray(values, dtype=float), vectors=vectors, n=n)


def fractional_apply(eig: EigenSystem, s: float, u: np.ndarray) -> np.ndarray:
    """Apply the fractional power: sum_i lambda_i^s <u, v_i>_n v_i.

    Requires 0 < s < 1 and either a complete eigensystem or u inside the
    computed span.  Round-off eigenvalues in [-1e-10, 0) are clamped to zero.
    """
    if not 0.0 < s < 1.0:
        raise InvalidInputError("s must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    if u.shape != (eig.n,):
        raise InvalidInputError("u must have length n=%d" % eig.n)
    coef = eig.coefficients(u)
    if eig.m < eig.n:
        recon = eig.vectors @ coef
        gap = np.sqrt(np.mean((u - recon) ** 2))
        if gap > 1e-8 * max(1.0, np.sqrt(np.mean(u * u))):
            raise InvalidInputError(
                "u lies outside the computed span (residual %.3e); "
                "request a complete eigensystem" % gap
            )
    lam = _clamped(eig.values)
    return eig.vectors @ (lam ** s * coef)


def _clamped(values: np.ndarray) -> np.ndarray:
    lam = np.asarray(values, dtype=float)
    if np.any(lam < -CLAMP_TOL):
        raise SolverError(
            "eigenvalue %.3e below the PSD clamp tolerance" % float(lam.min()),
            worst_residual=float(-lam.min()),
        )
    return np.where(lam < 0.0, 0.0, lam)


def dirichlet_form(op: LaplacianOperator, u: np.ndarray) -> float:
    """Edge-sum quadratic form (1/(2 n^2 eps^(d+2))) sum_ij w_ij (u_i - u_j)^2.

    Computed directly from the stored edges, no eigendecomposition involved;
    equals <L u, u>_n.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise InvalidInputError("u must have length n=%d" % op.n)
    rows, cols, w = op.graph.edge_arrays()
    diff = u[rows] - u[cols]
    total = float(np.dot(w, diff * diff))  # ordered pairs: both (i,j) and (j,i)
    return total * op.scale / (2.0 * op.n)
