"""Generators on {0,1}^N and their stationary laws.

States are indexed by binary encoding with site 1 as the least significant
bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from ..engine.ensemble import Rates, as_rates
from ..lattice import configuration_from_index
from ..params import compute_a, compute_b

DEFAULT_CAP = 14


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse rate matrix ``Q`` (rows sum to zero) of the chain on 2^n states."""

    Q: sp.csr_matrix
    n: int
    rates: Rates | None = None

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def exit_rates(self) -> np.ndarray:
        return -self.Q.diagonal()

    def transitions_from(self, index: int) -> dict[int, float]:
        row = self.Q.getrow(index)
        return {int(j): float(v) for j, v in zip(row.indices, row.data) if j != index}


def _assemble(n: int, pieces) -> sp.csr_matrix:
    size = 1 << n
    rows, cols, vals = [], [], []
    for src, dst, rate in pieces:
        keep = rate > 0
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(rate[keep])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    out = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(out)).tocsr()


def build_generator(params, n: int, *, cap: int = DEFAULT_CAP, censored_edges=()) -> GeneratorMatrix:
    """Exact generator of the open-boundary exclusion process on n sites.

    ``censored_edges`` removes transitions along the given edges: edge ``e``
    joins sites e and e+1, edge 0 is the left reservoir and edge n the right
    one.
    """
    if n < 1:
        raise ValueError("need at least one site")
    if n > cap:
        raise ValueError(f"N={n} exceeds the exact-analysis cap {cap}")
    r = as_rates(params)
    censored = set(int(e) for e in censored_edges)
    if any(not 0 <= e <= n for e in censored):
        raise ValueError("censored edge outside 0..N")
    idx = np.arange(1 << n, dtype=np.int64)
    pieces = []
    for e in range(1, n):
        if e in censored:
            continue
        lo = (idx >> (e - 1)) & 1
        hi = (idx >> e) & 1
        flip = idx ^ (3 << (e - 1))
        pieces.append((idx, flip, np.where((lo == 1) & (hi == 0), r.p, 0.0)))
        pieces.append((idx, flip, np.where((lo == 0) & (hi == 1), 1.0 - r.p, 0.0)))
    if 0 not in censored:
        bit = idx & 1
        pieces.append((idx, idx ^ 1, np.where(bit == 0, r.alpha, r.gamma)))
    if n not in censored:
        bit = (idx >> (n - 1)) & 1
        pieces.append((idx, idx ^ (1 << (n - 1)), np.where(bit == 0, r.delta, r.beta)))
    return GeneratorMatrix(_assemble(n, pieces), n, r)


def generator_from_matrix(Q, n: int | None = None) -> GeneratorMatrix:
    """Wrap an arbitrary rate matrix (rows are completed to sum to zero)."""
    Q = sp.csr_matrix(Q, dtype=float)
    off = Q - sp.diags(Q.diagonal())
    if (off.data < 0).any():
        raise ValueError("off-diagonal rates must be nonnegative")
    out = np.asarray(off.sum(axis=1)).ravel()
    size = Q.shape[0]
    if n is None:
        n = int(round(np.log2(size))) if size & (size - 1) == 0 else 0
    return GeneratorMatrix((off - sp.diags(out)).tocsr(), n)


def closed_classes(G: GeneratorMatrix) -> list[np.ndarray]:
    """Closed communicating classes of the chain."""
    graph = (G.Q - sp.diags(G.Q.diagonal())).tocsr()
    graph.eliminate_zeros()
    k, labels = csgraph.connected_components(graph, directed=True, connection="strong")
    leaves = np.ones(k, dtype=bool)
    coo = graph.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    leaves[np.unique(labels[coo.row[cross]])] = False
    return [np.flatnonzero(labels == c) for c in np.flatnonzero(leaves)]


def is_ergodic(G: GeneratorMatrix) -> bool:
    classes = closed_classes(G)
    return len(classes) == 1 and classes[0].size == G.size


def stationary_exact(G: GeneratorMatrix) -> np.ndarray:
    """Unique stationary law, solving pi Q = 0 on the closed class.

    States outside the closed class (transient ones) get weight zero; more
    than one closed class means there is no unique stationary law.
    """
    classes = closed_classes(G)
    if len(classes) != 1:
        raise ValueError(f"chain is reducible: {len(classes)} closed classes, no unique stationary law")
    cls = classes[0]
    pi = np.zeros(G.size)
    if cls.size == 1:
        pi[cls[0]] = 1.0
        return pi
    Qc = G.Q[cls][:, cls].tocsc()
    A = Qc.T.tolil()
    A[0, :] = 1.0
    rhs = np.zeros(cls.size)
    rhs[0] = 1.0
    A = A.tocsc()
    x = spsolve(A, rhs)
    # one round of iterative refinement
    x = x + spsolve(A, rhs - A @ x)
    x = np.clip(x, 0.0, None)
    pi[cls] = x / x.sum()
    return pi


def stationary_residual(G: GeneratorMatrix, pi: np.ndarray) -> float:
    return float(np.abs(G.Q.T @ pi).max())


def stationary_product(params, n: int, *, tol: float = 1e-10) -> np.ndarray:
    """Product law with density 1/(1+a), valid when a*b = 1."""
    a, b = compute_a(params), compute_b(params)
    if abs(a * b - 1.0) >= tol:
        raise ValueError(f"product form needs a*b = 1, got a*b = {a * b}")
    rho = 1.0 / (1.0 + a)
    counts = np.array([bin(i).count("1") for i in range(1 << n)])
    return rho**counts * (1.0 - rho) ** (n - counts)


def stationary_reversible(params, n: int) -> np.ndarray:
    """Stationary law when particles only enter and exit at site N.

    Weight (delta/beta)^|eta| times ((1-p)/p)^(sum of particle distances to
    site N), normalised by summation; Dirac masses when beta or delta vanish.
    """
    r = as_rates(params)
    if max(r.alpha, r.gamma) > 0:
        raise ValueError("reversible form needs alpha = gamma = 0")
    size = 1 << n
    pi = np.zeros(size)
    if r.beta == 0 and r.delta == 0:
        raise ValueError("closed segment has no unique stationary law")
    if r.beta == 0:
        pi[size - 1] = 1.0
        return pi
    if r.delta == 0:
        pi[0] = 1.0
        return pi
    idx = np.arange(size)
    count = np.zeros(size)
    dist = np.zeros(size)
    for i in range(n):
        bit = (idx >> i) & 1
        count += bit
        dist += bit * (n - 1 - i)
    if r.p >= 1.0:
        # particles pile up at the right end; only dist = 0 survives
        w = (r.delta / r.beta) ** count * (dist == 0)
    else:
        logw = count * np.log(r.delta / r.beta) + dist * np.log((1.0 - r.p) / r.p)
        w = np.exp(logw - logw.max())
    return w / w.sum()


def detailed_balance_residual(G: GeneratorMatrix, pi: np.ndarray) -> float:
    """max over pairs of |pi(x) q(x,y) - pi(y) q(y,x)|."""
    off = (G.Q - sp.diags(G.Q.diagonal())).tocsr()
    flow = sp.diags(pi) @ off
    diff = flow - flow.T
    return float(np.abs(diff.data).max()) if diff.nnz else 0.0


def bitstring(index: int, n: int) -> str:
    return configuration_from_index(index, n).to_string()


def write_distribution_csv(path, pi: np.ndarray, n: int) -> Path:
    """Golden-file format: rows ``bitstring,weight`` sorted by bitstring,
    weights with 17 significant digits."""
    rows = sorted((bitstring(i, n), float(w)) for i, w in enumerate(pi))
    path = Path(path)
    with path.open("w") as fh:
        fh.write("configuration,weight\n")
        for word, w in rows:
            fh.write(f"{word},{w:.17g}\n")
    return path


def read_distribution_csv(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if lines[0] != "configuration,weight":
        raise ValueError("not a distribution file")
    entries = [line.split(",") for line in lines[1:]]
    n = len(entries[0][0])
    pi = np.zeros(1 << n)
    for word, w in entries:
        pi[sum(int(ch) << i for i, ch in enumerate(word))] = float(w)
    return pi


def expected_state(index_weights: np.ndarray, n: int) -> np.ndarray:
    """Per-site occupation probabilities under a distribution vector."""
    idx = np.arange(1 << n)
    return np.array([index_weights[(idx >> i) & 1 == 1].sum() for i in range(n)])
