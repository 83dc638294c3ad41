"""Seed clustering and conversion of read clusters to decoder soft inputs.

A cluster is the set of length-152, N-free reads whose 16-nt prefix decodes
to one of the pre-determined seed values; reads with any other prefix are
discarded and counted. For each cluster the per-read basecall probability
vectors combine the Q-score (probability the call is right) with the
estimated transition table (how the remaining probability splits across
the other three bases). Payload positions become per-bit LLRs summed over
members; RS parity positions get a hard decision from the per-base
probability products. A basecall-count LLR rule with a fixed crossover
probability is provided as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel_stats import TransitionTable, encode_bases
from .dna_codec import BASES, OLIGO_NT, PARITY_NT, SEED_NT, seed_to_bases
from .fastq_io import ReadRecord, phred_to_prob
from .fountain import SeedSchedule

LLR_MAX = 30.0
_TINY = 1e-300

_PAYLOAD_SLICE = slice(SEED_NT, OLIGO_NT - PARITY_NT)
_PARITY_SLICE = slice(OLIGO_NT - PARITY_NT, OLIGO_NT)


@dataclass
class Cluster:
    seed: int
    members: list[ReadRecord]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class DiscardReport:
    n_input: int = 0
    n_wrong_length: int = 0
    n_with_n: int = 0
    n_seed_mismatch: int = 0
    n_retained: int = 0  # L_m, the reads that actually enter decoding


@dataclass
class ClusterLlr:
    seed: int
    payload_llrs: np.ndarray  # (256,) interleaved (y1, y2) per payload position
    rs_parity_hard: str
    member_count: int


def cluster_by_seed(
    reads: Iterable[ReadRecord],
    seed_table: SeedSchedule | Sequence[int],
) -> tuple[dict[int, Cluster], DiscardReport]:
    """Group reads by exact seed-region match against the seed table."""
    seeds = seed_table.seeds if isinstance(seed_table, SeedSchedule) else seed_table
    nt_to_seed = {seed_to_bases(s): s for s in seeds}
    clusters: dict[int, Cluster] = {}
    report = DiscardReport()
    for read in reads:
        report.n_input += 1
        if len(read.bases) != OLIGO_NT:
            report.n_wrong_length += 1
            continue
        if "N" in read.bases:
            report.n_with_n += 1
            continue
        seed = nt_to_seed.get(read.bases[:SEED_NT])
        if seed is None:
            report.n_seed_mismatch += 1
            continue
        cluster = clusters.get(seed)
        if cluster is None:
            clusters[seed] = Cluster(seed=seed, members=[read])
        else:
            cluster.members.append(read)
        report.n_retained += 1
    return clusters, report


def _stack_cluster(cluster: Cluster) -> tuple[np.ndarray, np.ndarray]:
    if not cluster.members:
        raise ValueError("empty cluster")
    codes = np.stack([encode_bases(m.bases) for m in cluster.members])
    qs = np.stack([np.asarray(m.qscores, dtype=np.float64) for m in cluster.members])
    return codes, qs


def read_prob_vectors(codes: np.ndarray, qs: np.ndarray, table: TransitionTable) -> np.ndarray:
    """(m, 152) codes and Q-scores -> (m, 152, 4) basecall probability vectors.

    The called base gets 1 - 10^(-Q/10); the other three split the rest
    according to the transition row for (position, called base). Vectors
    sum to 1 by construction.
    """
    m, n = codes.shape
    pcall = phred_to_prob(qs)
    pos = np.broadcast_to(np.arange(n), (m, n))
    vec = table.probs[pos, codes] * (1.0 - pcall)[:, :, None]
    np.put_along_axis(vec, codes[:, :, None].astype(np.int64), pcall[:, :, None], axis=2)
    return vec


def _size_weight(size: int, size_weights: Mapping[int, float] | None) -> float:
    if not size_weights:
        return 1.0
    key = min(size, max(size_weights))
    return float(size_weights.get(key, 1.0))


def llr_proposed(
    cluster: Cluster,
    table: TransitionTable,
    size_weights: Mapping[int, float] | None = None,
) -> ClusterLlr:
    """Q-score + transition-table LLRs, summed over cluster members.

    Per read and payload position: LLR(y1) = log[(P(A)+P(C)) / (P(G)+P(T))]
    and LLR(y2) = log[(P(A)+P(G)) / (P(C)+P(T))], natural log. The optional
    size_weights mapping scales whole-cluster LLRs by member count (off by
    default; the largest key acts as "this size and above").
    """
    codes, qs = _stack_cluster(cluster)
    vec = read_prob_vectors(codes, qs, table)[:, _PAYLOAD_SLICE]
    y1 = np.log(np.maximum(vec[..., 0] + vec[..., 1], _TINY)) - np.log(
        np.maximum(vec[..., 2] + vec[..., 3], _TINY)
    )
    y2 = np.log(np.maximum(vec[..., 0] + vec[..., 2], _TINY)) - np.log(
        np.maximum(vec[..., 1] + vec[..., 3], _TINY)
    )
    weight = _size_weight(cluster.size, size_weights)
    llrs = np.empty(2 * y1.shape[1])
    llrs[0::2] = y1.sum(axis=0)
    llrs[1::2] = y2.sum(axis=0)
    llrs = np.clip(weight * llrs, -LLR_MAX, LLR_MAX)
    return ClusterLlr(
        seed=cluster.seed,
        payload_llrs=llrs,
        rs_parity_hard=rs_part_hard(cluster, table),
        member_count=cluster.size,
    )


def rs_part_hard(cluster: Cluster, table: TransitionTable) -> str:
    """Hard decision for the 8 parity bases: argmax over per-member products.

    Products of the same per-read probability vectors used for payload
    LLRs, computed in log space; exact ties resolve to the first maximum,
    which is lexicographic A < C < G < T.
    """
    codes, qs = _stack_cluster(cluster)
    vec = read_prob_vectors(codes, qs, table)[:, _PARITY_SLICE]
    scores = np.log(np.maximum(vec, _TINY)).sum(axis=0)  # (8, 4)
    return "".join(BASES[i] for i in np.argmax(scores, axis=1))


def derive_crossover(sub_rate: float) -> float:
    """Per-bit crossover implied by a per-base substitution rate.

    Under uniform transitions, 2 of the 3 substitution targets flip each
    bit of the two-bit base label.
    """
    return sub_rate * 2.0 / 3.0


def llr_chandak(
    cluster: Cluster,
    crossover_p: float,
    size_weights: Mapping[int, float] | None = None,
) -> ClusterLlr:
    """Basecall-count LLRs: (n0 - n1) * log((1-p)/p) per payload bit.

    The RS parity hard decision is a per-position majority vote with
    lexicographic tie-breaking.
    """
    if not 0.0 < crossover_p < 0.5:
        raise ValueError(f"crossover_p must be in (0, 0.5), got {crossover_p}")
    codes, _ = _stack_cluster(cluster)
    payload = codes[:, _PAYLOAD_SLICE]
    m = payload.shape[0]
    bits1 = (payload >> 1).sum(axis=0)
    bits2 = (payload & 1).sum(axis=0)
    scale = np.log((1.0 - crossover_p) / crossover_p)
    llrs = np.empty(2 * payload.shape[1])
    llrs[0::2] = (m - 2.0 * bits1) * scale  # n0 - n1 = m - 2*n1
    llrs[1::2] = (m - 2.0 * bits2) * scale
    weight = _size_weight(cluster.size, size_weights)
    llrs = np.clip(weight * llrs, -LLR_MAX, LLR_MAX)

    parity = codes[:, _PARITY_SLICE]
    counts = np.zeros((PARITY_NT, 4), dtype=np.int64)
    np.add.at(counts, (np.tile(np.arange(PARITY_NT), m), parity.ravel()), 1)
    hard = "".join(BASES[i] for i in np.argmax(counts, axis=1))
    return ClusterLlr(
        seed=cluster.seed, payload_llrs=llrs, rs_parity_hard=hard, member_count=m
    )


def majority_vote(cluster: Cluster) -> str:
    """Per-position majority basecall over the full read, ties lexicographic."""
    codes, _ = _stack_cluster(cluster)
    m, n = codes.shape
    counts = np.zeros((n, 4), dtype=np.int64)
    np.add.at(counts, (np.tile(np.arange(n), m), codes.ravel()), 1)
    return "".join(BASES[i] for i in np.argmax(counts, axis=1))


def dump_cluster_llrs(cluster_llrs: Iterable[ClusterLlr], path: str | Path) -> None:
    """Debug TSV: seed, member count, parity decision, 256 payload LLRs."""
    with open(path, "w") as fh:
        fh.write("seed\tmembers\trs_parity\tpayload_llrs\n")
        for cl in cluster_llrs:
            llrs = " ".join(f"{v:.6g}" for v in cl.payload_llrs)
            fh.write(f"{cl.seed:08x}\t{cl.member_count}\t{cl.rs_parity_hard}\t{llrs}\n")
