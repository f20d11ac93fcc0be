"""PCA and isomap baseline models, plus the DrModel wrapper that gives
evolved genomes and baselines a common transform() surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .distances import _repair_connectivity, knn_graph, pairwise_euclidean
from .gp_core import AutoencoderMultiTree, MultiTree, encode
from .numerics import sym_eigen


class FitError(ValueError):
    pass


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray        # (p, k)
    explained_variance: np.ndarray
    k: int

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        return (rows - self.mean) @ self.components

    def inverse_transform(self, latent: np.ndarray) -> np.ndarray:
        latent = np.atleast_2d(np.asarray(latent, dtype=np.float64))
        return latent @ self.components.T + self.mean


def pca_fit(X: np.ndarray, k: int) -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / X.shape[0]
    eig = sym_eigen(cov)
    rank = int(np.sum(eig.eigenvalues > 1e-12 * max(1.0, eig.eigenvalues[0])))
    if k > rank:
        raise FitError(f"k={k} exceeds data rank {rank}")
    return PcaModel(
        mean=mean,
        components=eig.eigenvectors[:, :k],
        explained_variance=eig.eigenvalues[:k],
        k=k,
    )


def pca_transform(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    return model.transform(rows)


@dataclass
class IsomapModel:
    train_X: np.ndarray
    graph: object                 # symmetrized, connectivity-repaired kNN graph
    geodesic_matrix: np.ndarray   # (n, n)
    embedding: np.ndarray         # (n, k)
    eigenvalues: np.ndarray       # top-k of the double-centered matrix
    eigenvectors: np.ndarray      # (n, k)
    n_neighbors: int
    k: int
    _col_mean_sq: np.ndarray = None

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Out-of-sample embedding: connect each row to its nearest training
        points, take shortest paths through the training graph, then apply
        the landmark (Nystroem) projection."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        G = self.geodesic_matrix
        out = np.empty((rows.shape[0], self.k))
        scale = 1.0 / (2.0 * np.sqrt(self.eigenvalues))
        for r, x in enumerate(rows):
            e = np.sqrt(np.sum((self.train_X - x) ** 2, axis=1))
            nn = np.argsort(e, kind="stable")[: self.n_neighbors]
            d_new = np.min(e[nn][:, None] + G[nn, :], axis=0)
            out[r] = scale * (
                self.eigenvectors.T @ (self._col_mean_sq - d_new**2)
            )
        return out


def isomap_fit(X: np.ndarray, k: int, n_neighbors: int = 10) -> IsomapModel:
    """Classical MDS on the geodesic matrix of the kNN graph."""
    X = np.asarray(X, dtype=np.float64)
    d = pairwise_euclidean(X)
    g = _repair_connectivity(knn_graph(X, n_neighbors), d)
    G = dijkstra(g, directed=False)
    G = (G + G.T) / 2.0
    np.fill_diagonal(G, 0.0)

    n = G.shape[0]
    G2 = G**2
    row_mean = G2.mean(axis=1)
    total_mean = G2.mean()
    B = -0.5 * (G2 - row_mean[:, None] - row_mean[None, :] + total_mean)
    eig = sym_eigen(B)
    lam = eig.eigenvalues[:k]
    if np.any(lam <= 0):
        usable = int(np.sum(eig.eigenvalues > 0))
        raise FitError(
            f"embedding rank too low: only {usable} positive eigenvalues, "
            f"requested k={k}"
        )
    V = eig.eigenvectors[:, :k]
    return IsomapModel(
        train_X=X,
        graph=g,
        geodesic_matrix=G,
        embedding=V * np.sqrt(lam),
        eigenvalues=lam,
        eigenvectors=V,
        n_neighbors=n_neighbors,
        k=k,
        _col_mean_sq=G2.mean(axis=0),
    )


def isomap_transform(model: IsomapModel, rows: np.ndarray) -> np.ndarray:
    return model.transform(rows)


@dataclass
class DrModel:
    """Uniform wrapper: any fitted reducer exposing transform(rows) -> latent."""

    kind: str                     # pca | isomap | gp | gp_auto
    k: int
    model: object = None          # PcaModel or IsomapModel
    genome: object = None         # MultiTree or AutoencoderMultiTree

    def transform(self, rows: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if self.kind == "gp":
            return encode(self.genome, rows)
        if self.kind == "gp_auto":
            return encode(self.genome.encoder, rows)
        return self.model.transform(rows)
