"""Parity-check construction from active seeds and sum-product BP decoding.

Each active cluster contributes one check row: the XOR of its seed's
source-bit neighbors and the cluster's own coded bit is zero, so the
matrix has an identity block over the coded bits and the information bits
are punctured (no channel values). Decoding is the flooding-schedule
sum-product algorithm in the log domain with the tanh rule; the 256
payload bit-planes share one matrix, so messages are vectorized across
planes and planes drop out of the working set as they converge.

A plane counts as converged only when every check is satisfied and every
connected variable has a nonzero posterior; with all-zero inputs the
all-zero hard decision satisfies the checks but determines nothing, and is
reported as such. Information bits that appear in no row (dropouts beyond
the fountain's reach) stay at posterior 0 and are counted in
`undetermined` without blocking convergence of the rest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .fountain import NeighborCache, SolitonParams, required_symbols

LLR_MAX = 30.0


@dataclass
class SparseParityMatrix:
    n_info: int
    row_seeds: tuple[int, ...]
    rows_neighbors: list[np.ndarray]

    @property
    def n_rows(self) -> int:
        return len(self.rows_neighbors)

    @property
    def n_cols(self) -> int:
        return self.n_info + self.n_rows

    @property
    def total_weight(self) -> int:
        return sum(len(nb) + 1 for nb in self.rows_neighbors)

    def row_weight(self, r: int) -> int:
        return len(self.rows_neighbors[r]) + 1


def build_h(
    active_seeds: Sequence[int],
    params: SolitonParams,
    cache: NeighborCache | None = None,
) -> SparseParityMatrix:
    """One check row per active seed, in the order given."""
    if cache is None:
        cache = NeighborCache(params)
    n_active = len(active_seeds)
    needed = required_symbols(params)
    if n_active < needed:
        warnings.warn(
            f"only {n_active} active seeds, below the {needed} required for "
            f"reliable LT decoding; decoding may fail",
            stacklevel=2,
        )
    rows = [cache.neighbors(s) for s in active_seeds]
    return SparseParityMatrix(
        n_info=params.k, row_seeds=tuple(active_seeds), rows_neighbors=rows
    )


@dataclass
class BpResult:
    info_bits: np.ndarray       # (k,) or (k, planes) uint8
    coded_bits: np.ndarray      # (rows,) or (rows, planes) uint8
    posterior_llrs: np.ndarray  # (k + rows,) or (k + rows, planes)
    converged: np.ndarray | bool
    iterations_used: np.ndarray | int
    undetermined: np.ndarray | int  # bits with exactly-zero posterior


class _Graph:
    """Edge-indexed message-passing structure for one parity matrix."""

    def __init__(self, h: SparseParityMatrix):
        cols = []
        rows = []
        for r, nbrs in enumerate(h.rows_neighbors):
            cols.append(nbrs)
            cols.append([h.n_info + r])
            rows.append(np.full(len(nbrs) + 1, r, dtype=np.int64))
        self.edge_col = np.concatenate(cols).astype(np.int64)
        self.edge_row = np.concatenate(rows)
        self.n_edges = len(self.edge_col)
        weights = np.array([h.row_weight(r) for r in range(h.n_rows)], dtype=np.int64)
        self.row_starts = np.concatenate([[0], np.cumsum(weights)[:-1]])
        ones = np.ones(self.n_edges, dtype=np.float64)
        self.col_scatter = sparse.csr_matrix(
            (ones, (self.edge_col, np.arange(self.n_edges))),
            shape=(h.n_cols, self.n_edges),
        )
        self.check = sparse.csr_matrix(
            (np.ones(self.n_edges, dtype=np.int64), (self.edge_row, self.edge_col)),
            shape=(h.n_rows, h.n_cols),
        )


def check_syndrome(h: SparseParityMatrix, bits: np.ndarray) -> np.ndarray:
    """True per plane iff every row XORs to zero. bits: (n_cols,) or (n_cols, P)."""
    bits = np.asarray(bits, dtype=np.int64)
    squeeze = bits.ndim == 1
    if squeeze:
        bits = bits[:, None]
    g = _Graph(h)
    ok = ((g.check @ bits) % 2 == 0).all(axis=0)
    return bool(ok[0]) if squeeze else ok


def bp_decode(
    h: SparseParityMatrix,
    coded_llrs: np.ndarray,
    info_llrs: np.ndarray | None = None,
    max_iter: int = 500,
    llr_clip: float = LLR_MAX,
    dtype=np.float64,
    early_stop_on_syndrome: bool = True,
) -> BpResult:
    """Sum-product decode; coded_llrs is (rows,) or (rows, planes).

    Information bits default to LLR 0 (punctured). Hard decisions map
    LLR >= 0 to bit 0. A plane always leaves the working set when its
    messages reach an exact fixed point (saturated clips make this
    common); a fixed point cannot change on further iterations, so
    stopping there is output-identical to exhausting max_iter. With
    early_stop_on_syndrome a plane also exits as soon as every check is
    satisfied and every connected posterior is nonzero; that freezes the
    hard decisions at a valid codeword but may stop before posterior
    values settle, so disable it when exact marginals matter.
    """
    coded = np.asarray(coded_llrs, dtype=dtype)
    squeeze = coded.ndim == 1
    if squeeze:
        coded = coded[:, None]
    if coded.shape[0] != h.n_rows:
        raise ValueError(f"coded_llrs rows {coded.shape[0]} != H rows {h.n_rows}")
    n_planes = coded.shape[1]
    if info_llrs is None:
        info = np.zeros((h.n_info, n_planes), dtype=dtype)
    else:
        info = np.asarray(info_llrs, dtype=dtype)
        if info.ndim == 1:
            info = np.broadcast_to(info[:, None], (h.n_info, n_planes)).copy()
        if info.shape != (h.n_info, n_planes):
            raise ValueError(f"info_llrs shape {info.shape} != ({h.n_info}, {n_planes})")

    g = _Graph(h)
    channel = np.concatenate([info, coded], axis=0)
    tanh_cap = np.tanh(llr_clip / 2.0)
    connected = np.zeros(h.n_cols, dtype=bool)
    connected[g.edge_col] = True

    # per-plane outputs, filled as planes converge
    posterior_out = np.empty((h.n_cols, n_planes), dtype=dtype)
    iters_out = np.full(n_planes, max_iter, dtype=np.int64)
    converged_out = np.zeros(n_planes, dtype=bool)

    active = np.arange(n_planes)
    ch = channel.copy()
    m_cv = np.zeros((g.n_edges, len(active)), dtype=dtype)
    posterior = ch.copy()

    for it in range(1, max_iter + 1):
        col_tot = ch + (g.col_scatter @ m_cv)
        m_vc = col_tot[g.edge_col] - m_cv
        t = np.tanh(0.5 * m_vc)
        zero = t == 0.0
        if zero.any():
            t_safe = np.where(zero, 1.0, t)
            row_prod = np.multiply.reduceat(t_safe, g.row_starts, axis=0)
            row_zeros = np.add.reduceat(zero.astype(np.int8), g.row_starts, axis=0)
            rp = row_prod[g.edge_row]
            rz = row_zeros[g.edge_row]
            ext = np.where(
                rz == 0, rp / t_safe, np.where((rz == 1) & zero, rp, 0.0)
            )
        else:
            # no zero messages: the excluded-edge product is a plain quotient
            row_prod = np.multiply.reduceat(t, g.row_starts, axis=0)
            ext = row_prod[g.edge_row] / t
        np.clip(ext, -tanh_cap, tanh_cap, out=ext)
        m_cv_new = 2.0 * np.arctanh(ext)
        fixed_point = (m_cv_new == m_cv).all(axis=0)
        m_cv = m_cv_new

        posterior = ch + (g.col_scatter @ m_cv)
        bits = (posterior < 0).astype(np.int64)
        syndrome_ok = ((g.check @ bits) % 2 == 0).all(axis=0)
        determined = (posterior[connected] != 0.0).all(axis=0)
        done = syndrome_ok & determined
        stop = (done | fixed_point) if early_stop_on_syndrome else fixed_point
        if stop.any():
            idx = np.nonzero(stop)[0]
            posterior_out[:, active[idx]] = posterior[:, idx]
            iters_out[active[idx]] = it
            converged_out[active[idx]] = done[idx]
            keep = np.nonzero(~stop)[0]
            if len(keep) == 0:
                active = active[:0]
                break
            active = active[keep]
            ch = ch[:, keep]
            m_cv = m_cv[:, keep]
            posterior = posterior[:, keep]

    if len(active):
        # planes that ran out the iteration budget: record their final state
        posterior_out[:, active] = posterior
        bits = (posterior < 0).astype(np.int64)
        syndrome_ok = ((g.check @ bits) % 2 == 0).all(axis=0)
        determined = (posterior[connected] != 0.0).all(axis=0)
        converged_out[active] = syndrome_ok & determined

    result_posterior = posterior_out
    bits_all = (result_posterior < 0).astype(np.uint8)
    undetermined = (result_posterior == 0.0).sum(axis=0).astype(np.int64)
    info_bits = bits_all[: h.n_info]
    coded_bits = bits_all[h.n_info :]
    if squeeze:
        return BpResult(
            info_bits=info_bits[:, 0],
            coded_bits=coded_bits[:, 0],
            posterior_llrs=result_posterior[:, 0],
            converged=bool(converged_out[0]),
            iterations_used=int(iters_out[0]),
            undetermined=int(undetermined[0]),
        )
    return BpResult(
        info_bits=info_bits,
        coded_bits=coded_bits,
        posterior_llrs=result_posterior,
        converged=converged_out,
        iterations_used=iters_out,
        undetermined=undetermined,
    )
