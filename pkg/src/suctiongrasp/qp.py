"""Dense primal active-set solver for small convex quadratic programs.

    minimize    0.5 x'Hx + g'x
    subject to  A x <= b

H must be symmetric positive semidefinite. Problems here have at most a
handful of variables, so every iteration refactors the reduced system from
scratch instead of updating factorizations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import linprog


class QPError(RuntimeError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    active: tuple[int, ...]


def _null_space(M: np.ndarray, n: int, tol: float = 1e-12) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    rank = int((s > tol * max(1.0, s[0])).sum())
    return Vt[rank:].T


def feasible_point(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Some x with A x <= b, via a phase-one linear program."""
    n = A.shape[1]
    # maximize the slack s subject to A x + s <= b, s <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=[(None, None)] * n + [(None, 1.0)],
                  method="highs")
    if res.status != 0 or res.x[-1] < -1e-9:
        raise QPError("constraint set is empty")
    return res.x[:n]


def solve_qp(H, g, A, b, x0=None, max_iter: int = 200, tol: float = 1e-10) -> QPResult:
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    A = np.asarray(A, float).reshape(-1, len(g))
    b = np.asarray(b, float)
    n = len(g)
    scale = 1.0 + np.abs(b)
    x = feasible_point(A, b) if x0 is None else np.array(x0, float)
    if np.any(A @ x - b > tol * scale * 10):
        x = feasible_point(A, b)

    # working set: active constraints at x, kept linearly independent
    working: list[int] = []
    for i in np.where(np.abs(A @ x - b) <= tol * scale)[0]:
        if np.linalg.matrix_rank(A[working + [int(i)]]) == len(working) + 1:
            working.append(int(i))

    hscale = max(1.0, float(np.abs(H).max()))
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        pass
    else:
        xs, it, converged, wk, nw = _active_set_pd(H, g, A, b, x, np.array(working, np.int64),
                                                    max_iter, tol, hscale)
        if it < 0:
            raise QPError("objective unbounded below")
        return QPResult(xs, float(0.5 * xs @ H @ xs + g @ xs), int(it), bool(converged),
                        tuple(int(i) for i in wk[:nw]))

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        Aw = A[working]
        Z = _null_space(Aw, n)
        p = np.zeros(n)
        unbounded_dir = False
        if Z.shape[1]:
            Hz = Z.T @ H @ Z
            rg = Z.T @ grad
            y, *_ = np.linalg.lstsq(Hz, -rg, rcond=None)
            if np.linalg.norm(Hz @ y + rg) > 1e-9 * (1.0 + np.linalg.norm(rg)):
                # zero-curvature descent direction: -rg restricted to null(Hz)
                Nz = _null_space(Hz, Hz.shape[0], tol=1e-12)
                y = -Nz @ (Nz.T @ rg)
                unbounded_dir = True
            p = Z @ y
        if np.linalg.norm(p) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            if not working:
                converged = True
                break
            lam, *_ = np.linalg.lstsq(Aw.T, -grad, rcond=None)
            kkt = np.linalg.norm(Aw.T @ lam + grad)
            j = int(np.argmin(lam))
            if lam[j] >= -tol * hscale:
                converged = kkt <= 1e-6 * (1.0 + np.linalg.norm(grad))
                break
            working.pop(j)
            continue
        Ap = A @ p
        slack = b - A @ x
        step = np.inf if unbounded_dir else 1.0
        block = -1
        for i in range(len(b)):
            if i in working or Ap[i] <= 1e-15 * (1.0 + np.abs(A[i]).sum()):
                continue
            s = max(slack[i], 0.0) / Ap[i]
            if s < step:
                step, block = s, i
        if not np.isfinite(step):
            raise QPError("objective unbounded below")
        x = x + step * p
        if block >= 0:
            working.append(block)
    obj = float(0.5 * x @ H @ x + g @ x)
    return QPResult(x, obj, it, converged, tuple(working))


@njit(cache=True)
def _active_set_pd(H, g, A, b, x, working0, max_iter, tol, hscale):
    """Primal active-set iterations for positive definite ``H``.

    Steps come from the null-space method: the reduced Hessian ``Z'HZ`` is
    refactored by Cholesky every iteration, so ``p`` stays exactly on the
    working constraints.
    """
    n = len(g)
    m = len(b)
    work = np.empty(m, np.int64)
    nw = len(working0)
    work[:nw] = working0
    x = x.copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        Aw = np.empty((nw, n))
        for k in range(nw):
            Aw[k] = A[work[k]]
        if nw:
            _, sv, Vt = np.linalg.svd(Aw)
            rank = 0
            for k in range(len(sv)):
                if sv[k] > 1e-12 * max(1.0, sv[0]):
                    rank += 1
            Z = np.ascontiguousarray(Vt[rank:].T)
        else:
            Z = np.eye(n)
        p = np.zeros(n)
        if Z.shape[1]:
            Hz = Z.T @ H @ Z
            Lc = np.linalg.cholesky(Hz)
            y = np.linalg.solve(Lc.T, np.linalg.solve(Lc, -(Z.T @ grad)))
            p = Z @ y
        if np.linalg.norm(p) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            if nw == 0:
                converged = True
                break
            lam = np.linalg.lstsq(Aw.T, -grad)[0]
            j = int(np.argmin(lam))
            if lam[j] >= -tol * hscale:
                converged = True
                break
            for k in range(j, nw - 1):
                work[k] = work[k + 1]
            nw -= 1
            continue
        Ap = A @ p
        step = 1.0
        block = -1
        for i in range(m):
            active = False
            for k in range(nw):
                if work[k] == i:
                    active = True
                    break
            if active or Ap[i] <= 1e-15 * (1.0 + np.abs(A[i]).sum()):
                continue
            s = max(b[i] - A[i] @ x, 0.0) / Ap[i]
            if s < step:
                step = s
                block = i
        x = x + step * p
        if block >= 0:
            work[nw] = block
            nw += 1
    return x, it, converged, work, nw
