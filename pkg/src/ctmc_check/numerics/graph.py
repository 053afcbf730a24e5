"""Graph algorithms over the transition digraph: SCCs, BSCCs, reachability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class BsccDecomposition:
    bsccs: list[np.ndarray]  # sorted state indices per BSCC, ordered by smallest member
    transient: np.ndarray

    def labels(self, n: int) -> np.ndarray:
        """BSCC number per state, -1 for transient states."""
        out = np.full(n, -1, dtype=np.int64)
        for k, members in enumerate(self.bsccs):
            out[members] = k
        return out


def scc_labels(adjacency: sp.spmatrix) -> tuple[int, np.ndarray]:
    return connected_components(sp.csr_matrix(adjacency), directed=True, connection="strong")


def bscc_decompose(adjacency: sp.spmatrix) -> BsccDecomposition:
    """Split states into bottom SCCs and the remaining transient states.

    An SCC is bottom when no edge leaves it; absorbing states form
    singleton BSCCs.
    """
    adjacency = sp.csr_matrix(adjacency)
    n = adjacency.shape[0]
    n_scc, label = scc_labels(adjacency)
    coo = adjacency.tocoo()
    leaving = label[coo.row] != label[coo.col]
    non_bottom = np.zeros(n_scc, dtype=bool)
    non_bottom[label[coo.row[leaving]]] = True
    bottom_of_state = ~non_bottom[label]
    members = np.flatnonzero(bottom_of_state)
    lab = label[members]
    order = np.argsort(lab, kind="stable")
    cuts = np.flatnonzero(np.diff(lab[order])) + 1
    groups = np.split(members[order], cuts) if members.size else []
    bsccs = sorted((g.astype(np.int64) for g in groups), key=lambda a: a[0])
    return BsccDecomposition(bsccs, np.flatnonzero(~bottom_of_state))


def _unit(adjacency: sp.spmatrix) -> sp.csr_matrix:
    adj = sp.csr_matrix(adjacency, dtype=float, copy=True)
    adj.data[:] = 1.0
    return adj


def backward_reachable(adjacency: sp.spmatrix, targets: np.ndarray,
                       through: np.ndarray | None = None) -> np.ndarray:
    """Mask of states that can reach ``targets`` (a mask), moving only
    through states in ``through`` before arrival (all states if None)."""
    adj = _unit(adjacency)
    reach = np.array(targets, dtype=bool)
    allowed = np.ones_like(reach) if through is None else np.asarray(through, dtype=bool)
    frontier = reach.copy()
    while frontier.any():
        frontier = ((adj @ frontier) > 0) & allowed & ~reach
        reach |= frontier
    return reach


def forward_reachable(adjacency: sp.spmatrix, sources: np.ndarray) -> np.ndarray:
    adj_t = _unit(adjacency).T.tocsr()
    reach = np.array(sources, dtype=bool)
    frontier = reach.copy()
    while frontier.any():
        frontier = ((adj_t @ frontier) > 0) & ~reach
        reach |= frontier
    return reach


def prob0(adjacency, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """States where ``left U right`` holds with probability 0."""
    return ~backward_reachable(adjacency, right, through=left)


def prob1(adjacency, left: np.ndarray, right: np.ndarray, no: np.ndarray | None = None) -> np.ndarray:
    """States where ``left U right`` holds with probability 1."""
    if no is None:
        no = prob0(adjacency, left, right)
    can_fail = backward_reachable(adjacency, no, through=np.asarray(left) & ~np.asarray(right))
    return ~can_fail
