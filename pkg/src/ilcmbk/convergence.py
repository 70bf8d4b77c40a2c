"""Trial-to-trial error transfer matrix and its infinity-norm certificate.

The stacked error e_k = [e_k(n dt), ..., e_k(dt)] (initial sample dropped)
is modelled as e_{k+1} = G e_k with G block upper triangular. G_m replaces
every block by its induced infinity norm, so ||G||_inf <= ||G_m||_inf, and
||G_m||_inf < 1 certifies monotone decay of V_k = ||e_k||_inf^2.

Block layout: block row r and column q hold time indices j = n - r and
i = n - q. Diagonal blocks are a_j = sum_{l=0..j} (-alpha0)^l; the block at
(j, i) with i < j is b_i c_i d_{i+1} ... d_{j-1}, where b_i = I - a_i.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import as_mat, inf_norm, pinv


@dataclass(frozen=True)
class TransferOperands:
    alpha0: np.ndarray
    c: tuple  # c[i - 1] is c_i, i = 1..n
    d: tuple  # d[i - 1] is d_i

    def __post_init__(self):
        a0 = as_mat(self.alpha0)
        if a0.shape[0] != a0.shape[1]:
            raise ValueError("alpha0 must be square")
        c = tuple(as_mat(x) for x in self.c)
        d = tuple(as_mat(x) for x in self.d)
        if len(c) == 0:
            raise ValueError("horizon must be at least 1")
        if len(c) != len(d):
            raise ValueError("c and d block lists must have equal length")
        if any(x.shape != a0.shape for x in c + d):
            raise ValueError("all blocks must share alpha0's shape")
        if not all(np.all(np.isfinite(x)) for x in (a0,) + c + d):
            raise ValueError("transfer operands must be finite")
        object.__setattr__(self, "alpha0", a0)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def block(self) -> int:
        return self.alpha0.shape[0]


def block_a(alpha0, i: int) -> np.ndarray:
    """Partial geometric sum a_i = sum_{l=0..i} (-alpha0)^l."""
    alpha0 = as_mat(alpha0)
    if i < 0:
        raise ValueError("i must be non-negative")
    eye = np.eye(alpha0.shape[0])
    term, total = eye, eye.copy()
    for _ in range(i):
        term = term @ -alpha0
        total = total + term
    return total


def block_b(alpha0, i: int) -> np.ndarray:
    """b_i = sum_{l=1..i} -(-alpha0)^l, i.e. I - a_i."""
    alpha0 = as_mat(alpha0)
    return np.eye(alpha0.shape[0]) - block_a(alpha0, i)


def _diag_blocks(ops: TransferOperands) -> np.ndarray:
    """Stack of a_1..a_n."""
    p = ops.block
    term = np.eye(p)
    total = np.eye(p)
    out = np.empty((ops.n, p, p))
    for i in range(1, ops.n + 1):
        term = term @ -ops.alpha0
        total = total + term
        out[i - 1] = total
    return out


def _offdiag_bands(ops: TransferOperands, a: np.ndarray):
    """Yield (gap, blocks) with blocks[i - 1] the (i + gap, i) block of G."""
    n = ops.n
    if n < 2:
        return
    eye = np.eye(ops.block)
    c = np.array(ops.c)
    d = np.array(ops.d)
    # b_i c_i for i = 1..n-1
    band = np.matmul(eye - a[: n - 1], c[: n - 1])
    for gap in range(1, n):
        yield gap, band
        if gap < n - 1:
            # extend by d_{i + gap} for i = 1..n-1-gap
            band = np.matmul(band[: n - 1 - gap], d[gap : n - 1])


def assemble_G(ops: TransferOperands) -> np.ndarray:
    n, p = ops.n, ops.block
    a = _diag_blocks(ops)
    G = np.zeros((n * p, n * p))

    def put(j, i, blk):
        r, q = n - j, n - i
        G[r * p : (r + 1) * p, q * p : (q + 1) * p] = blk

    for j in range(1, n + 1):
        put(j, j, a[j - 1])
    for gap, band in _offdiag_bands(ops, a):
        for idx, blk in enumerate(band):
            i = idx + 1
            put(i + gap, i, blk)
    return G


def _block_norms(blocks: np.ndarray) -> np.ndarray:
    return np.abs(blocks).sum(axis=2).max(axis=1)


def assemble_Gm(ops: TransferOperands) -> np.ndarray:
    n = ops.n
    a = _diag_blocks(ops)
    Gm = np.zeros((n, n))
    idx = np.arange(n)
    # row r <-> time n - r
    Gm[idx, idx] = _block_norms(a)[::-1]
    for gap, band in _offdiag_bands(ops, a):
        i = np.arange(1, band.shape[0] + 1)
        Gm[n - (i + gap), n - i] = _block_norms(band)
    return Gm


def gm_norm(ops: TransferOperands) -> float:
    return inf_norm(assemble_Gm(ops))


def bound_eq33(n_alpha: float, n_cu: float) -> float:
    """Closed-form majorant (1 + n_alpha n_cu / (1 - n_cu)) / (1 + n_alpha).

    Below 1 exactly when n_cu < 1/2.
    """
    if not n_alpha > 0:
        raise ValueError("n_alpha must be positive")
    if not 0 < n_cu < 1:
        raise ValueError("n_cu must lie in (0, 1) for the geometric series to converge")
    return (1.0 + n_alpha * n_cu / (1.0 - n_cu)) / (1.0 + n_alpha)


def row_sum_closed_form(n_alpha: float, n_cu: float, i: int) -> float:
    """Row-i sum of G_m for constant scalar blocks, as the closed form
    behind ``bound_eq33`` writes it (before its final inequality).

    Carries a sign error in the b terms; agrees with ``row_sum_exact`` only
    for i = 1.
    """
    na, nc = n_alpha, n_cu
    first = (1.0 + na * (nc - nc**i) / (1.0 - nc)) / (1.0 + na)
    ratio = -nc / na
    second = (-na) ** (i + 1) * (1.0 - ratio**i) / (1.0 + nc / na) / (1.0 + na)
    return first - second


def row_sum_exact(n_alpha: float, n_cu: float, i: int) -> float:
    """Row-i sum of G_m for scalar blocks alpha0 = n_alpha, |c| = |d| = n_cu,
    summed directly from |a_i| + sum_{m<i} |b_m| n_cu^(i-m)."""
    na, nc = n_alpha, n_cu

    def a(m):
        return (1.0 - (-na) ** (m + 1)) / (1.0 + na)

    total = abs(a(i))
    for m in range(1, i):
        total += abs(1.0 - a(m)) * nc ** (i - m)
    return total


@dataclass(frozen=True)
class Certificate:
    norm_G: float
    norm_Gm: float
    bound_eq33: float | None
    n_alpha: float
    n_cu: float
    passes: bool
    horizon: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def certify(ops: TransferOperands, with_G: bool = True) -> Certificate:
    """Evaluate the certificate; ``passes`` is decided by ||G_m|| < 1 alone."""
    norm_gm = gm_norm(ops)
    norm_g = inf_norm(assemble_G(ops)) if with_G else math.nan
    n_alpha = inf_norm(ops.alpha0)
    n_cu = max(inf_norm(x) for x in ops.c)
    try:
        bound = bound_eq33(n_alpha, n_cu)
    except ValueError:
        bound = None
    return Certificate(norm_g, norm_gm, bound, n_alpha, n_cu, bool(norm_gm < 1.0), ops.n)


def operands_from_run(alpha, C_true, U_k, U_next, C_hat, true_C=False) -> TransferOperands:
    """Build operands from one learning step.

    ``C_true`` and ``C_hat`` are (n+1, 3, 2) stacks over t = 0..n, the gain
    stacks are (n, 2, 3). Block i uses C at t = i + 1 and U at t = i, for
    i = 1..n-1, so the certified horizon is n - 1. alpha0 is the
    alpha C(t) C_hat^+(t) with the largest norm over t = 1..n.
    """
    C_true = np.asarray(C_true)
    U_k = np.asarray(U_k)
    U_next = np.asarray(U_next)
    n = U_k.shape[0]
    if n < 2:
        raise ValueError("need at least two gain steps to certify")
    est = C_true if true_C else np.asarray(C_hat)
    best, alpha0 = -1.0, None
    for t in range(1, n + 1):
        cand = alpha * C_true[t] @ pinv(est[t])
        nrm = inf_norm(cand)
        if nrm > best:
            best, alpha0 = nrm, cand
    c = np.matmul(C_true[2 : n + 1], U_k[1:n])
    d = -np.matmul(C_true[2 : n + 1], U_next[1:n])
    return TransferOperands(alpha0, tuple(c), tuple(d))


@dataclass(frozen=True)
class LyapunovSeq:
    V: tuple
    monotone_from: int


def lyapunov(curve, rtol: float = 0.0) -> LyapunovSeq:
    """V_k = ||e_k||_inf^2 and the first index after which V never rises.

    ``curve`` may be a sequence of records with an ``e_inf`` attribute, a
    LearningCurve, or plain floats (taken as ||e_k||_inf). With ``rtol`` > 0
    a step only counts as a rise when ||e||_inf grows by more than
    ``rtol`` times its first value (round-off allowance).
    """
    e_inf = getattr(curve, "e_inf", curve)
    vals = [float(getattr(x, "e_inf", x)) for x in e_inf]
    if not vals:
        raise ValueError("empty learning curve")
    V = tuple(v * v for v in vals)
    slack = rtol * vals[0]
    k0 = len(vals) - 1
    while k0 > 0 and vals[k0] <= vals[k0 - 1] + slack:
        k0 -= 1
    return LyapunovSeq(V, k0)
