"""Sparse symmetric solves and the smallest generalized eigenpair of ``A u = mu B u``."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.linalg import eigh as scipy_eigh

from .assembly import SparseSymMatrix, mass, stiffness, WeightKind
from .mesh import TriMesh

log = logging.getLogger(__name__)

Matrix = Union[SparseSymMatrix, sparse.spmatrix, np.ndarray]


class EigenError(np.linalg.LinAlgError):
    pass


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _op(M: Matrix):
    if isinstance(M, SparseSymMatrix):
        return M.csr
    return M


def _diag(M):
    M = _op(M)
    return np.asarray(M.diagonal()) if sparse.issparse(M) else np.diag(M).copy()


def cg(A: Matrix, b: np.ndarray, tol: float = 1e-10, maxit: Optional[int] = None,
       preconditioner: str = "jacobi", x0: Optional[np.ndarray] = None,
       warn: bool = True) -> CGResult:
    """Preconditioned conjugate gradients; stops when ``|Ax - b| <= tol |b|``."""
    A = _op(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxit = 10 * n if maxit is None else maxit
    if preconditioner == "jacobi":
        d = _diag(A)
        if np.any(d <= 0):
            raise EigenError("jacobi preconditioner needs a positive diagonal")
        dinv = 1.0 / d
    elif preconditioner == "none":
        dinv = np.ones(n)
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0:
        return CGResult(np.zeros(n), 0, 0.0, True)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while res > tol and it < maxit:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise EigenError("matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res > tol and warn:
        log.warning("cg: %d iterations, relative residual %.3e > %.1e", it, res, tol)
    return CGResult(x, it, res, res <= tol)


def cg_solve(A: Matrix, b: np.ndarray, tol: float = 1e-10, maxit: Optional[int] = None,
             preconditioner: str = "jacobi") -> np.ndarray:
    """Solution vector of ``A x = b`` (a warning is logged if ``maxit`` is hit)."""
    return cg(A, b, tol, maxit, preconditioner).x


def _default_preconditioner(A, B) -> Callable:
    """Approximate inverse of ``A_+ + B`` by a loose inner CG solve."""
    A_, B_ = _op(A), _op(B)
    if sparse.issparse(A_) or sparse.issparse(B_):
        d = _diag(A_)
        floor = 1e-12 * max(float(np.max(np.abs(d))), 1e-300)
        P = sparse.csr_matrix(A_) + sparse.diags(np.maximum(d, floor) - d) + sparse.csr_matrix(B_)
    else:
        d = np.diag(A_)
        floor = 1e-12 * max(float(np.max(np.abs(d))), 1e-300)
        P = A_ + np.diag(np.maximum(d, floor) - d) + B_
    dP = _diag(P)
    if np.any(dP <= 0):
        return lambda r: r
    state = {"ok": True}

    def apply(r):
        if state["ok"]:
            try:
                return cg(P, r, tol=1e-2, maxit=200, warn=False).x
            except EigenError:
                # A_+ + B indefinite: fall back to Jacobi scaling for good
                state["ok"] = False
        return r / dP

    return apply


def _svqb(S, BS, drop=1e-12):
    """Coefficients T such that ``S @ T`` is B-orthonormal (near-dependent directions dropped)."""
    G = S.T @ BS
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0] = 1.0
    ev, V = np.linalg.eigh(G / np.outer(d, d))
    keep = ev > drop * ev.max()
    return (V[:, keep] / np.sqrt(ev[keep])) / d[:, None]


def min_gen_eig(A: Matrix, B: Matrix, tol: float = 1e-9, x0: Optional[np.ndarray] = None,
                maxit: Optional[int] = None, precond: Optional[Callable] = None) -> EigenResult:
    """Smallest eigenpair of ``A u = mu B u`` by single-vector LOBPCG.

    Each step does Rayleigh-Ritz on ``[x, T r, p]``; the Ritz value never
    increases.  ``precond`` maps a residual to a correction (default: loose CG
    on ``A_+ + B``).  Convergence: ``|A u - mu B u| <= tol |B u|``.
    """
    A_, B_ = _op(A), _op(B)
    n = A_.shape[0]
    if A_.shape != (n, n) or B_.shape != (n, n):
        raise ValueError("A and B must be square with matching dimensions")
    maxit = int(50 * math.sqrt(n)) + 10 if maxit is None else maxit
    T = _default_preconditioner(A_, B_) if precond is None else precond
    x = np.ones(n) if x0 is None else np.array(x0, dtype=float)
    Bx = B_ @ x
    xBx = float(x @ Bx)
    if not xBx > 0:
        if abs(xBx) >= 1e-300:
            raise EigenError("B is not positive definite")
        raise EigenError("breakdown: start vector has vanishing B-norm")
    s = 1.0 / math.sqrt(xBx)
    x, Bx = x * s, Bx * s
    Ax = A_ @ x
    mu = float(x @ Ax)
    p = Ap = Bp = None
    it = 0
    while True:
        r = Ax - mu * Bx
        res = float(np.linalg.norm(r) / np.linalg.norm(Bx))
        log.debug("lobpcg it=%d mu=%.15g res=%.3e", it, mu, res)
        if res <= tol or it >= maxit:
            break
        w = T(r)
        w = w / np.linalg.norm(w)
        Aw, Bw = A_ @ w, B_ @ w
        if p is None:
            S, AS, BS = np.stack([x, w], 1), np.stack([Ax, Aw], 1), np.stack([Bx, Bw], 1)
        else:
            S, AS, BS = (np.stack([x, w, p], 1), np.stack([Ax, Aw, Ap], 1),
                         np.stack([Bx, Bw, Bp], 1))
        C = _svqb(S, BS)
        H = C.T @ (S.T @ AS) @ C
        G = C.T @ (S.T @ BS) @ C
        theta, V = scipy_eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
        c = C @ V[:, 0]
        x_new, Ax_new, Bx_new = S @ c, AS @ c, BS @ c
        nb = float(x_new @ Bx_new)
        if not nb > 1e-300:
            raise EigenError("breakdown: B-norm of iterate vanished")
        k = 1.0 / math.sqrt(nb)
        c = c * k
        x_new, Ax_new, Bx_new = x_new * k, Ax_new * k, Bx_new * k
        mu_new = float(x_new @ Ax_new)
        if mu_new > mu + 1e-10 * max(1.0, abs(mu)):
            raise EigenError(f"Rayleigh quotient increased: {mu!r} -> {mu_new!r}")
        # search direction from the w and p coefficients, avoiding x_new - x cancellation
        p, Ap, Bp = S[:, 1:] @ c[1:], AS[:, 1:] @ c[1:], BS[:, 1:] @ c[1:]
        pn = float(np.linalg.norm(p))
        if pn > 0:
            p, Ap, Bp = p / pn, Ap / pn, Bp / pn
        else:
            p = Ap = Bp = None
        x, Ax, Bx, mu = x_new, Ax_new, Bx_new, mu_new
        it += 1
        if it % 50 == 0:
            # refresh products to flush accumulated rounding
            Ax, Bx = A_ @ x, B_ @ x
    i = int(np.argmax(np.abs(x)))
    if x[i] < 0:
        x = -x
    Bx = B_ @ x
    x = x / math.sqrt(float(x @ Bx))
    mu = float(x @ (A_ @ x)) / float(x @ (B_ @ x))
    return EigenResult(mu, x, res, it, res <= tol)


def dense_gen_eig(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """All eigenvalues of ``A u = mu B u`` (ascending) by Cholesky reduction."""
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    B = np.asarray(B.toarray() if hasattr(B, "toarray") else B, dtype=float)
    if A.shape[0] > 2000:
        raise ValueError("dense oracle limited to n <= 2000")
    try:
        L = np.linalg.cholesky(0.5 * (B + B.T))
    except np.linalg.LinAlgError as exc:
        raise EigenError("B is not positive definite") from exc
    Li = np.linalg.inv(L)
    C = Li @ (0.5 * (A + A.T)) @ Li.T
    return np.sort(np.linalg.eigvalsh(0.5 * (C + C.T)))


def smallest_dirichlet_eigenvalue(mesh: TriMesh, tol: float = 1e-9) -> EigenResult:
    """Discrete first Dirichlet eigenvalue of the Laplacian on the mesh."""
    return min_gen_eig(stiffness(mesh), mass(mesh, WeightKind.one()), tol=tol)
