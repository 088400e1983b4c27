"""Matrix-free quasi-Newton recursion kernels over a curvature-pair history.

Two recursion schemes compute the action ``r = H_t d`` of an inverse-Hessian
approximation built from curvature pairs ``(s_i, g_i)`` without ever forming
``H_t``:

* ``bfgs_two_loop`` -- the classic two-loop recursion for the BFGS inverse
  update ``H_{t+1} = (I - rho s g^T) H_t (I - rho g s^T) + rho s s^T``,
  ``rho = 1/(g^T s)``.
* ``sr1_apply`` -- the recursive scheme for the inverse SR1 update
  ``H_{t+1} = H_t + v v^T / (v^T g)`` with ``v = s - H_t g``, expressed through
  orthogonalized rank-one directions ``p_i``.

Both run in O(dim * pairs) per application.  ``dense_bfgs_oracle`` and
``dense_sr1_oracle`` build the explicit matrices by applying the rank-one/two
update formulas pair by pair; they exist as independent test oracles and are
never used on the hot path.

The initial matrix is restricted to a positive scalar multiple of the
identity (``InitScale``), which keeps every recursion a sequence of vector
inner products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "BFGS",
    "SR1",
    "CURVATURE_EPS",
    "SR1_SKIP_EPS",
    "CurvaturePair",
    "InitScale",
    "PairHistory",
    "push_pair",
    "bfgs_two_loop",
    "sr1_apply",
    "dense_bfgs_oracle",
    "dense_sr1_oracle",
]

BFGS = "bfgs"
SR1 = "sr1"

# BFGS pair acceptance: s^T g > CURVATURE_EPS * |s||g|.  The curvature
# condition holds exactly under lower-level strong convexity, but floating
# point needs a relative gate.
CURVATURE_EPS = 1e-12

# SR1 apply-time skip: drop pair i when |p_i^T g_i| <= SR1_SKIP_EPS * |p_i||g_i|.
SR1_SKIP_EPS = 1e-8


def _check_mode(mode):
    if mode not in (BFGS, SR1):
        raise ValueError(f"unknown quasi-Newton mode {mode!r}; expected {BFGS!r} or {SR1!r}")
    return mode


@dataclass(frozen=True)
class InitScale:
    """Initial inverse-Hessian approximation H0 = h0 * I with h0 > 0."""

    h0: float

    def __post_init__(self):
        h0 = float(self.h0)
        if not np.isfinite(h0) or h0 <= 0.0:
            raise ValueError(f"h0 must be a positive finite scalar, got {self.h0!r}")
        object.__setattr__(self, "h0", h0)


def _as_scale(h0) -> float:
    """Accept an InitScale or a bare positive float; return the scalar."""
    if isinstance(h0, InitScale):
        return h0.h0
    return InitScale(float(h0)).h0


@dataclass(frozen=True)
class CurvaturePair:
    """One curvature pair: iterate difference s and gradient difference g."""

    s: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        g = np.asarray(self.g, dtype=np.float64)
        if s.ndim != 1 or g.ndim != 1 or s.shape != g.shape:
            raise ValueError(f"s and g must be 1-d vectors of equal dimension, got {s.shape} and {g.shape}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise ValueError("curvature pair contains non-finite entries")
        s = s.copy()
        g = g.copy()
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "g", g)

    @property
    def dim(self) -> int:
        return self.s.shape[0]


class PairHistory:
    """Ordered (oldest-first) curvature pairs of a fixed dimension.

    Pairs enter only through :func:`push_pair`, which applies the
    mode-specific safeguard.  Storage is unbounded by default; with
    ``max_pairs=m`` the oldest pair is evicted on overflow, which yields
    limited-memory (L-BFGS-style) behaviour.
    """

    def __init__(self, dim: int, max_pairs: int | None = None):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if max_pairs is not None and int(max_pairs) < 1:
            raise ValueError(f"max_pairs must be >= 1 or None, got {max_pairs}")
        self.dim = dim
        self.max_pairs = None if max_pairs is None else int(max_pairs)
        cap = 8 if self.max_pairs is None else self.max_pairs
        self._s = np.empty((cap, dim))
        self._g = np.empty((cap, dim))
        self._sg = np.empty(cap)          # s_i^T g_i
        self._norm_prod = np.empty(cap)   # |s_i| * |g_i|
        self._rho = np.empty(cap)         # 1 / s_i^T g_i
        self._n = 0
        # lazily extended SR1 directions, keyed by h0: (P, pg, count_consumed)
        self._sr1_cache: dict[float, tuple[np.ndarray, np.ndarray, int]] = {}

    def __len__(self) -> int:
        return self._n

    @property
    def pairs(self) -> tuple[CurvaturePair, ...]:
        return tuple(CurvaturePair(self._s[i], self._g[i]) for i in range(self._n))

    def _grow(self):
        cap = max(8, 2 * self._s.shape[0])
        for name in ("_s", "_g"):
            old = getattr(self, name)
            new = np.empty((cap, self.dim))
            new[: self._n] = old[: self._n]
            setattr(self, name, new)
        for name in ("_sg", "_norm_prod", "_rho"):
            old = getattr(self, name)
            new = np.empty(cap)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def _append(self, s, g, sg, norm_prod):
        if self.max_pairs is not None and self._n == self.max_pairs:
            # evict oldest; previously built SR1 directions are stale
            for name in ("_s", "_g"):
                arr = getattr(self, name)
                arr[: self._n - 1] = arr[1 : self._n]
            for name in ("_sg", "_norm_prod", "_rho"):
                arr = getattr(self, name)
                arr[: self._n - 1] = arr[1 : self._n]
            self._n -= 1
            self._sr1_cache.clear()
        elif self._n == self._s.shape[0]:
            self._grow()
        i = self._n
        self._s[i] = s
        self._g[i] = g
        self._sg[i] = sg
        self._norm_prod[i] = norm_prod
        self._rho[i] = 1.0 / sg if sg != 0.0 else np.inf
        self._n = i + 1

    def _packed(self):
        return self._s[: self._n], self._g[: self._n], self._rho[: self._n]


def push_pair(hist: PairHistory, pair: CurvaturePair, mode: str) -> bool:
    """Append ``pair`` to ``hist`` iff it passes the mode's safeguard gate.

    BFGS requires the relative curvature condition
    ``s^T g > CURVATURE_EPS * |s| |g|``.  SR1 retains every non-degenerate
    pair (its denominator safeguard is applied later, at apply time).
    Degenerate pairs (zero s or zero g) carry no curvature information and
    are rejected in both modes.

    Returns True when the pair was appended.
    """
    _check_mode(mode)
    if not isinstance(pair, CurvaturePair):
        pair = CurvaturePair(*pair)
    if pair.dim != hist.dim:
        raise ValueError(f"pair dimension {pair.dim} does not match history dimension {hist.dim}")
    s, g = pair.s, pair.g
    sg = float(np.dot(s, g))
    norm_prod = float(np.linalg.norm(s) * np.linalg.norm(g))
    if norm_prod == 0.0:
        return False
    if mode == BFGS and not (sg > CURVATURE_EPS * norm_prod):
        return False
    hist._append(s, g, sg, norm_prod)
    return True


@njit(cache=True, fastmath=True)
def _two_loop_core(d, h0, S, G, rho, t):
    n = d.shape[0]
    r = d.copy()
    alpha = np.empty(t)
    for i in range(t - 1, -1, -1):
        acc = 0.0
        for j in range(n):
            acc += S[i, j] * r[j]
        a = rho[i] * acc
        alpha[i] = a
        for j in range(n):
            r[j] -= a * G[i, j]
    for j in range(n):
        r[j] *= h0
    for i in range(t):
        acc = 0.0
        for j in range(n):
            acc += G[i, j] * r[j]
        b = alpha[i] - rho[i] * acc
        for j in range(n):
            r[j] += b * S[i, j]
    return r


def _check_apply_args(d, hist):
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] != hist.dim:
        raise ValueError(f"d has shape {d.shape}, expected ({hist.dim},)")
    return d


def bfgs_two_loop(d, h0, hist: PairHistory) -> np.ndarray:
    """Return ``H_t d`` for the BFGS inverse approximation over ``hist``.

    ``H_t`` is the matrix obtained by applying the BFGS inverse update to
    ``h0 * I`` over the pairs in insertion order.  Inputs are not modified.

    Raises :class:`RejectedPairError` if any retained pair violates the
    curvature condition at call time (callers are expected to have filtered
    through :func:`push_pair`).
    """
    from .errors import RejectedPairError

    d = _check_apply_args(d, hist)
    h0 = _as_scale(h0)
    t = len(hist)
    if t == 0:
        return h0 * d
    bad = hist._sg[:t] <= CURVATURE_EPS * hist._norm_prod[:t]
    if bad.any():
        i = int(np.argmax(bad))
        raise RejectedPairError(
            f"pair {i} violates the curvature condition (s^T g = {hist._sg[i]:.3e})"
        )
    S, G, rho = hist._packed()
    return _two_loop_core(d, h0, S, G, rho, t)


def _sr1_directions(hist: PairHistory, h0: float):
    """Build (lazily, incrementally) the SR1 directions p_i for this h0.

    p_i = s_i - H_0 g_i - sum_{j<i, kept} (p_j^T g_i / p_j^T g_j) p_j,
    which by induction equals s_i - H_i g_i.  Pairs failing the denominator
    safeguard are dropped and contribute nothing to later directions.
    Returns (P, pg) for the kept pairs only.
    """
    t = len(hist)
    P, pg, consumed = hist._sr1_cache.get(h0, (np.empty((0, hist.dim)), np.empty(0), 0))
    if consumed < t:
        kept = [P[i] for i in range(P.shape[0])]
        pgs = list(pg)
        for i in range(consumed, t):
            g = hist._g[i]
            p = hist._s[i] - h0 * g
            if kept:
                Pk = np.asarray(kept)
                coeff = (Pk @ g) / np.asarray(pgs)
                p = p - Pk.T @ coeff
            den = float(np.dot(p, g))
            if abs(den) > SR1_SKIP_EPS * np.linalg.norm(p) * np.linalg.norm(g):
                kept.append(p)
                pgs.append(den)
        P = np.asarray(kept) if kept else np.empty((0, hist.dim))
        pg = np.asarray(pgs)
        hist._sr1_cache[h0] = (P, pg, t)
    return P, pg


def sr1_apply(d, h0, hist: PairHistory) -> np.ndarray:
    """Return ``H_t d`` for the inverse SR1 approximation over ``hist``.

    Computes ``H_0 d + sum_i (p_i^T d / p_i^T g_i) p_i`` where the ``p_i``
    come from the orthogonalization-style inner loop; pairs whose denominator
    fails the skip rule contribute nothing.
    """
    d = _check_apply_args(d, hist)
    h0 = _as_scale(h0)
    if len(hist) == 0:
        return h0 * d
    P, pg = _sr1_directions(hist, h0)
    r = h0 * d
    if P.shape[0]:
        r = r + P.T @ ((P @ d) / pg)
    return r


def dense_bfgs_oracle(h0, hist: PairHistory) -> np.ndarray:
    """Explicit H_t from the BFGS inverse update, pair by pair (test oracle)."""
    from .errors import RejectedPairError

    h0 = _as_scale(h0)
    n = hist.dim
    H = h0 * np.eye(n)
    for i in range(len(hist)):
        s, g = hist._s[i], hist._g[i]
        sg = hist._sg[i]
        if sg <= CURVATURE_EPS * hist._norm_prod[i]:
            raise RejectedPairError(
                f"pair {i} violates the curvature condition (s^T g = {sg:.3e})"
            )
        rho = 1.0 / sg
        V = np.eye(n) - rho * np.outer(g, s)
        H = V.T @ H @ V + rho * np.outer(s, s)
    return H


def dense_sr1_oracle(h0, hist: PairHistory) -> np.ndarray:
    """Explicit H_t from the inverse SR1 update, pair by pair (test oracle).

    Applies the same denominator skip rule as :func:`sr1_apply` so that
    ``dense_sr1_oracle(h0, hist) @ d == sr1_apply(d, h0, hist)`` up to
    rounding.
    """
    h0 = _as_scale(h0)
    n = hist.dim
    H = h0 * np.eye(n)
    for i in range(len(hist)):
        s, g = hist._s[i], hist._g[i]
        v = s - H @ g
        den = float(np.dot(v, g))
        if abs(den) <= SR1_SKIP_EPS * np.linalg.norm(v) * np.linalg.norm(g):
            continue
        H = H + np.outer(v, v) / den
    return H
