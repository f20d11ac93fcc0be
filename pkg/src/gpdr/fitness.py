"""The four fitness objectives: distance preservation (Sammon stress),
weighted rank preservation (Kendall's tau), neural-teacher distillation,
and GP-autoencoder reconstruction.

All objectives are minimized. The comparison target is always the
PCA-space data; the genome's input is always the raw standardized data.
Latent-side distances are always Euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distances import geodesic, pairwise_euclidean
from .gp_core import AutoencoderMultiTree, MultiTree, autoencode, encode

ZERO_DISTANCE_TOL = 1e-12
WORST_FITNESS = float("inf")
# above this many cached pair entries, rank scoring avoids the pair cache
RANK_CACHE_MAX_ELEMENTS = 50_000_000


class FitnessError(ValueError):
    pass


@dataclass(frozen=True)
class WeightScheme:
    """Rank-based pair weighting; rank 0 is the shortest distance."""

    kind: str = "hyperbolic"

    def weight(self, ranks: np.ndarray) -> np.ndarray:
        if self.kind == "hyperbolic":
            return 1.0 / (ranks + 1.0)
        if self.kind == "uniform":
            return np.ones_like(ranks, dtype=np.float64)
        raise FitnessError(f"unknown weight scheme {self.kind!r}")


HYPERBOLIC = WeightScheme("hyperbolic")


def sammon_stress(D: np.ndarray, D_tilde: np.ndarray) -> float:
    """(1/sum d_ij) * sum (d_ij - d~_ij)^2 / d_ij over pairs i<j.

    Near-zero original distances (duplicate points) are skipped in both
    sums so they cannot blow up the normalizer.
    """
    D = np.asarray(D, dtype=np.float64)
    D_tilde = np.asarray(D_tilde, dtype=np.float64)
    if D.shape != D_tilde.shape:
        raise FitnessError(f"shape mismatch: {D.shape} vs {D_tilde.shape}")
    iu = np.triu_indices(D.shape[0], 1)
    d = D[iu]
    dt = D_tilde[iu]
    keep = d > ZERO_DISTANCE_TOL
    d = d[keep]
    dt = dt[keep]
    if d.size == 0:
        raise FitnessError("degenerate target: no positive distances")
    return float(np.sum((d - dt) ** 2 / d) / np.sum(d))


def _pair_indices(m: int):
    return np.triu_indices(m, 1)


def kendall_tau_row(d_row, dt_row) -> float:
    """Kendall tau-a over all unordered pairs of one distance row.

    Ties count as neither concordant nor discordant; the denominator is the
    full pair count N(N-1)/2.
    """
    d = np.asarray(d_row, dtype=np.float64)
    dt = np.asarray(dt_row, dtype=np.float64)
    if d.shape != dt.shape or d.ndim != 1 or d.size < 2:
        raise FitnessError("rows must be equal-length vectors of size >= 2")
    j, l = _pair_indices(d.size)
    s = np.sign(d[j] - d[l]) * np.sign(dt[j] - dt[l])
    return float(s.sum() / j.size)


def _row_ranks(d: np.ndarray) -> np.ndarray:
    """Ascending ranks, 0 = shortest; ties broken by position (stable)."""
    order = np.argsort(d, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(d.size)
    return ranks


def weighted_kendall_tau_row(
    d_row, dt_row, scheme: WeightScheme = HYPERBOLIC
) -> float:
    """Weighted tau: pair (j,l) carries weight w(r_j) + w(r_l), with ranks
    taken from the original-distance row. Result is the weighted concordant
    minus discordant mass over the total pair weight, in [-1, 1].
    """
    d = np.asarray(d_row, dtype=np.float64)
    dt = np.asarray(dt_row, dtype=np.float64)
    if d.shape != dt.shape or d.ndim != 1 or d.size < 2:
        raise FitnessError("rows must be equal-length vectors of size >= 2")
    w = scheme.weight(_row_ranks(d).astype(np.float64))
    j, l = _pair_indices(d.size)
    pair_w = w[j] + w[l]
    s = np.sign(d[j] - d[l]) * np.sign(dt[j] - dt[l])
    return float(np.sum(pair_w * s) / np.sum(pair_w))


def _strip_diagonal(D: np.ndarray) -> np.ndarray:
    n = D.shape[0]
    return D[~np.eye(n, dtype=bool)].reshape(n, n - 1)


class RankTargetCache:
    """Per-batch precomputation shared by every genome in a generation.

    Caches the original-distance pair signs and pair weights, so scoring a
    genome only needs the latent-side pair signs.
    """

    def __init__(self, D: np.ndarray, scheme: Optional[WeightScheme]):
        R = _strip_diagonal(np.asarray(D, dtype=np.float64))
        m = R.shape[1]
        self.j, self.l = _pair_indices(m)
        self.sign_d = np.sign(R[:, self.j] - R[:, self.l])
        if scheme is None:
            self.pair_w = None
            self.total_w = float(self.j.size)
        else:
            ranks = np.argsort(np.argsort(R, axis=1, kind="stable"), axis=1)
            w = scheme.weight(ranks.astype(np.float64))
            self.pair_w = w[:, self.j] + w[:, self.l]
            self.total_w = self.pair_w.sum(axis=1)

    def mean_tau(self, D_tilde: np.ndarray) -> float:
        Rt = _strip_diagonal(np.asarray(D_tilde, dtype=np.float64))
        s = np.sign(Rt[:, self.j] - Rt[:, self.l])
        if self.pair_w is None:
            taus = (self.sign_d * s).sum(axis=1) / self.total_w
        else:
            taus = (self.pair_w * self.sign_d * s).sum(axis=1) / self.total_w
        return float(taus.mean())


def rank_fitness(
    D: np.ndarray,
    D_tilde: np.ndarray,
    scheme: Optional[WeightScheme] = HYPERBOLIC,
) -> float:
    """Negative mean per-row (weighted) Kendall tau; minimized, in [-1, 1]."""
    D = np.asarray(D, dtype=np.float64)
    D_tilde = np.asarray(D_tilde, dtype=np.float64)
    if D.shape != D_tilde.shape:
        raise FitnessError(f"shape mismatch: {D.shape} vs {D_tilde.shape}")
    return -RankTargetCache(D, scheme).mean_tau(D_tilde)


class RankSweep:
    """Target-side precomputation for scoring many latent embeddings
    against one (possibly full-split) distance matrix.

    Per row the weighted concordance
    ``sum over pairs (w_j + w_l) * sign(d_j - d_l) * sign(t_j - t_l)``
    equals a sum over ordered pairs taken in ascending target-distance
    order, which a Fenwick (binary indexed) tree over latent-distance
    ranks accumulates in O(m log m) per row instead of O(m^2). The trees
    for all rows are swept simultaneously as numpy lanes. Pairs tied on
    the target side are counted by the sweep and subtracted exactly
    afterwards; pairs tied on the latent side contribute zero because the
    tree is queried with strict (below-group / above-group) bounds.
    """

    def __init__(self, D: np.ndarray, scheme: Optional[WeightScheme]):
        R = _strip_diagonal(np.asarray(D, dtype=np.float64))
        n, m = R.shape
        self.n, self.m = n, m
        if scheme is None:
            # plain tau: every pair weighs 1, i.e. half-weights of 0.5
            w = np.full((n, m), 0.5)
        else:
            ranks = np.argsort(np.argsort(R, axis=1, kind="stable"), axis=1)
            w = scheme.weight(ranks.astype(np.float64))
        self.total_w = (m - 1) * w.sum(axis=1)
        # processing order: ascending target distance, stable
        self.order = np.argsort(R, axis=1, kind="stable")
        self.w_sorted = np.take_along_axis(w, self.order, axis=1)
        cw = np.cumsum(self.w_sorted, axis=1)
        self.cum_w = np.concatenate([np.zeros((n, 1)), cw[:, :-1]], axis=1)
        # runs of equal target distance within a row (rare); pairs inside
        # them carry sign 0 and must be backed out of the sweep totals
        R_sorted = np.take_along_axis(R, self.order, axis=1)
        same = R_sorted[:, 1:] == R_sorted[:, :-1]
        self.tie_groups: list[tuple[int, int, int]] = []
        for r in np.nonzero(same.any(axis=1))[0]:
            i = 0
            while i < m - 1:
                if same[r, i]:
                    j = i
                    while j < m - 1 and same[r, j]:
                        j += 1
                    self.tie_groups.append((int(r), i, j + 1))
                    i = j + 1
                else:
                    i += 1
        size = 1
        while size < m + 1:
            size *= 2
        self.tree_size = size
        self.tree_bits = size.bit_length()

    def tau_per_row(self, D_tilde: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        T = np.take_along_axis(_strip_diagonal(D_tilde), self.order, axis=1)
        # per element: its slot in the row's latent-distance sort, plus the
        # strict bounds of its equal-value run ([lo, hi) in slot coords)
        ord_t = np.argsort(T, axis=1, kind="stable")
        sv = np.take_along_axis(T, ord_t, axis=1)
        idx = np.arange(m)
        differs = sv[:, 1:] != sv[:, :-1]
        first = np.concatenate([np.ones((n, 1), bool), differs], axis=1)
        last = np.concatenate([differs, np.ones((n, 1), bool)], axis=1)
        lo_sorted = np.maximum.accumulate(np.where(first, idx, 0), axis=1)
        hi_sorted = np.where(last, idx + 1, m)
        hi_sorted = np.minimum.accumulate(hi_sorted[:, ::-1], axis=1)[:, ::-1]
        broadcast_idx = np.broadcast_to(idx, (n, m))
        slot = np.empty((n, m), dtype=np.int64)
        lo = np.empty((n, m), dtype=np.int64)
        hi = np.empty((n, m), dtype=np.int64)
        np.put_along_axis(slot, ord_t, broadcast_idx, axis=1)
        np.put_along_axis(lo, ord_t, lo_sorted, axis=1)
        np.put_along_axis(hi, ord_t, hi_sorted, axis=1)

        lanes = np.arange(n)
        tree_c = np.zeros((n, self.tree_size + 1))
        tree_w = np.zeros((n, self.tree_size + 1))
        num = np.zeros(n)
        for i in range(m):
            # prefix sums below the element's value run (strictly smaller
            # latent distance) and up to its end (smaller or equal); index
            # 0 is a zero sentinel so the loop needs no masking
            ql = lo[:, i].copy()
            qh = hi[:, i].copy()
            c_lo = np.zeros(n)
            w_lo = np.zeros(n)
            c_hi = np.zeros(n)
            w_hi = np.zeros(n)
            for _ in range(self.tree_bits):
                c_lo += tree_c[lanes, ql]
                w_lo += tree_w[lanes, ql]
                c_hi += tree_c[lanes, qh]
                w_hi += tree_w[lanes, qh]
                ql &= ql - 1
                qh &= qh - 1
            wi = self.w_sorted[:, i]
            c_gt = i - c_hi
            w_gt = self.cum_w[:, i] - w_hi
            num += (w_lo + wi * c_lo) - (w_gt + wi * c_gt)
            pos = slot[:, i] + 1
            for _ in range(self.tree_bits):
                tree_c[lanes, pos] += 1.0
                tree_w[lanes, pos] += wi
                # clamping at the root keeps the walk in bounds; the root
                # node is never read because queries stay below it
                pos = np.minimum(pos + (pos & -pos), self.tree_size)
        for r, a, b in self.tie_groups:
            t = T[r, a:b]
            wv = self.w_sorted[r, a:b]
            ju, lu = np.triu_indices(b - a, 1)
            s = np.sign(t[lu] - t[ju])
            num[r] -= np.sum((wv[ju] + wv[lu]) * s)
        return num / self.total_w


def rank_fitness_many(
    D: np.ndarray,
    latents,
    scheme: Optional[WeightScheme] = HYPERBOLIC,
) -> list[float]:
    """Rank fitness of many latent embeddings against one target distance
    matrix, equal to ``rank_fitness(D, pairwise_euclidean(L))`` per latent
    but O(n^2 log n) per latent instead of O(n^3)."""
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if n < 2:
        raise FitnessError("need at least 2 rows")
    lat = [np.asarray(L, dtype=np.float64) for L in latents]
    for L in lat:
        if L.shape[0] != n:
            raise FitnessError(f"latent has {L.shape[0]} rows, expected {n}")
    sweep = RankSweep(D, scheme)
    return [
        float(-sweep.tau_per_row(pairwise_euclidean(L)).mean()) for L in lat
    ]


def teacher_fitness(L: np.ndarray, X_tilde: np.ndarray) -> float:
    """Mean squared difference between teacher latent and genome latent."""
    L = np.asarray(L, dtype=np.float64)
    X_tilde = np.asarray(X_tilde, dtype=np.float64)
    if L.shape != X_tilde.shape:
        raise FitnessError(f"shape mismatch: {L.shape} vs {X_tilde.shape}")
    return float(np.mean((L - X_tilde) ** 2))


def gp_autoencoder_fitness(X_target: np.ndarray, X_hat: np.ndarray) -> float:
    """Mean squared reconstruction error of the decoder output."""
    X_target = np.asarray(X_target, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X_target.shape != X_hat.shape:
        raise FitnessError(
            f"shape mismatch: {X_target.shape} vs {X_hat.shape}"
        )
    return float(np.mean((X_target - X_hat) ** 2))


OBJECTIVES = ("dist", "rank", "teacher", "gp_autoencoder")


@dataclass
class FitnessSpec:
    """Which objective scores a genome, its metric and its target space.

    ``target`` is the PCA-space data over the DR-train split; ``inputs``
    is the raw standardized data the genomes consume.
    """

    objective: str
    inputs: np.ndarray                      # (n, p) standardized features
    target: np.ndarray                      # (n, p') PCA-space data
    metric: Optional[str] = None            # dist/rank only
    teacher_latent: Optional[np.ndarray] = None
    weight_scheme: Optional[WeightScheme] = HYPERBOLIC
    n_neighbors: int = 10
    _D_full: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise FitnessError(f"unknown objective {self.objective!r}")
        if self.objective in ("dist", "rank"):
            if self.metric not in ("euclidean", "geodesic"):
                raise FitnessError("dist/rank require a metric")
        elif self.metric is not None:
            raise FitnessError(f"{self.objective} takes no metric")
        if self.objective == "teacher" and self.teacher_latent is None:
            raise FitnessError("teacher objective requires teacher_latent")

    def full_distance_matrix(self) -> np.ndarray:
        """Target-space distances over the whole DR-train split, computed
        once per run and sliced per batch."""
        if self._D_full is None:
            if self.metric == "geodesic":
                self._D_full = geodesic(self.target, self.n_neighbors)
            else:
                self._D_full = pairwise_euclidean(self.target)
        return self._D_full


class BatchContext:
    """Everything a generation's scoring needs for one mini-batch."""

    def __init__(self, spec: FitnessSpec, batch_indices: np.ndarray):
        self.indices = np.asarray(batch_indices)
        self.X = spec.inputs[self.indices]
        self.target = spec.target[self.indices]
        self.D = None
        self.rank_cache = None
        self.teacher = None
        if spec.objective in ("dist", "rank"):
            D_full = spec.full_distance_matrix()
            self.D = D_full[np.ix_(self.indices, self.indices)]
        if spec.objective == "rank":
            m = self.D.shape[0]
            # the cache holds n_rows x n_pairs arrays; past the memory cap,
            # score() falls back to the Fenwick-sweep path instead
            if m * (m - 1) * (m - 2) // 2 <= RANK_CACHE_MAX_ELEMENTS:
                self.rank_cache = RankTargetCache(self.D, spec.weight_scheme)
        if spec.objective == "teacher":
            self.teacher = spec.teacher_latent[self.indices]


def prepare_batch(spec: FitnessSpec, batch_indices) -> BatchContext:
    return BatchContext(spec, batch_indices)


def score(genome, spec: FitnessSpec, ctx: BatchContext) -> float:
    """Dispatch to the configured objective; non-finite outcomes collapse
    to the worst-possible sentinel instead of aborting the run."""
    try:
        if spec.objective == "gp_autoencoder":
            if not isinstance(genome, AutoencoderMultiTree):
                raise FitnessError("gp_autoencoder requires an AMT genome")
            _, recon = autoencode(genome, ctx.X)
            value = gp_autoencoder_fitness(ctx.target, recon)
        else:
            if not isinstance(genome, MultiTree):
                raise FitnessError(f"{spec.objective} requires a MultiTree")
            latent = encode(genome, ctx.X)
            if spec.objective == "dist":
                value = sammon_stress(ctx.D, pairwise_euclidean(latent))
            elif spec.objective == "rank":
                if ctx.rank_cache is not None:
                    value = -ctx.rank_cache.mean_tau(
                        pairwise_euclidean(latent)
                    )
                else:
                    value = rank_fitness_many(
                        ctx.D, [latent], spec.weight_scheme
                    )[0]
            else:
                value = teacher_fitness(ctx.teacher, latent)
    except FitnessError:
        raise
    except FloatingPointError:
        return WORST_FITNESS
    if not np.isfinite(value):
        return WORST_FITNESS
    return value
