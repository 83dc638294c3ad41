"""Iterative soft decoding with RS-driven redecoding, plus baselines.

The soft path follows the decode loop: BP over all 256 bit-planes, then RS
decoding of every reassembled oligo (table seed + BP payload decision +
cluster parity decision). A round is accepted only if every RS decode is
clean or corrected away from the seed symbols; otherwise the offending
clusters are dropped, the matrix is rebuilt, and BP reruns with the
surviving clusters' original LLRs, up to the redecoding limit. On success
the information bits are recovered from the RS-corrected coded bits by
erasure solving (peeling with a dense GF(2) fallback), which is also the
engine behind the majority-vote hard-decoding baseline.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import gf_rs
from .bp_decoder import bp_decode, build_h
from .channel_stats import TransitionTable
from .clustering_llr import (
    Cluster,
    ClusterLlr,
    cluster_by_seed,
    llr_chandak,
    llr_proposed,
    majority_vote,
)
from .dna_codec import (
    base_indices_to_bit_array,
    base_indices_to_symbols,
    seed_to_bases,
    sequence_to_indices,
    symbols_to_base_indices,
)
from .fastq_io import ReadRecord
from .fountain import NeighborCache, SeedSchedule, SolitonParams, required_symbols

SEED_SYMBOLS = 4
PAYLOAD_SYMBOLS = 32


@dataclass(frozen=True)
class PipelineParams:
    soliton: SolitonParams
    n_re: int = 3
    llr_mode: str = "proposed"  # proposed | chandak
    redecoding_enabled: bool = True
    crossover_p: float | None = None  # required for chandak mode
    size_weights: Mapping[int, float] | None = None
    bp_max_iter: int = 500
    llr_clip: float = 30.0
    bp_dtype: str = "float64"
    decoder: str = "soft"  # soft | hard

    def __post_init__(self) -> None:
        if self.n_re < 0:
            raise ValueError("n_re must be >= 0")
        if self.llr_mode not in ("proposed", "chandak"):
            raise ValueError(f"unknown llr_mode {self.llr_mode!r}")
        if self.decoder not in ("soft", "hard"):
            raise ValueError(f"unknown decoder {self.decoder!r}")


@dataclass
class DecodeReport:
    success: bool
    reason: str
    iterations_performed: int  # BP rounds executed (1 + redecodes)
    clusters_discarded_per_round: list[int] = field(default_factory=list)
    clusters_with_seed_corrections_removed: int = 0
    seed_corrections_per_round: list[int] = field(default_factory=list)
    removed_seeds_per_round: list[list[int]] = field(default_factory=list)
    recovered_payload: np.ndarray | None = None
    active_clusters: int = 0
    timing: dict = field(default_factory=dict)

    def to_dict(self, omit_timing: bool = False) -> dict:
        return {
            "success": self.success,
            "reason": self.reason,
            "iterations_performed": self.iterations_performed,
            "clusters_discarded_per_round": self.clusters_discarded_per_round,
            "clusters_with_seed_corrections_removed": self.clusters_with_seed_corrections_removed,
            "active_clusters": self.active_clusters,
            "timing": {} if omit_timing else self.timing,
        }


def lt_erasure_solve(
    rows_neighbors: Sequence[np.ndarray],
    coded_bits: np.ndarray,
    k: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve info bits from coded-bit rows: XOR(info[nbrs]) = coded[row].

    Returns (info (k, P) uint8, resolved (k,) bool, consistent (P,) bool).
    Peeling resolves degree-1 rows and substitutes; the residual system, if
    any, goes through dense GF(2) elimination. Planes where a fully-reduced
    row keeps a nonzero value are flagged inconsistent.
    """
    coded = np.asarray(coded_bits, dtype=np.uint8)
    if coded.ndim == 1:
        coded = coded[:, None]
    n_rows, planes = coded.shape
    if n_rows != len(rows_neighbors):
        raise ValueError("coded_bits rows do not match neighbor rows")

    row_sets = [set(map(int, nb)) for nb in rows_neighbors]
    row_val = coded.copy()
    var_rows: dict[int, set[int]] = {}
    for r, s in enumerate(row_sets):
        for v in s:
            var_rows.setdefault(v, set()).add(r)

    info = np.zeros((k, planes), dtype=np.uint8)
    resolved = np.zeros(k, dtype=bool)
    consistent = np.ones(planes, dtype=bool)

    queue = [r for r, s in enumerate(row_sets) if len(s) == 1]
    while queue:
        r = queue.pop()
        if len(row_sets[r]) != 1:
            continue
        v = next(iter(row_sets[r]))
        value = row_val[r].copy()
        info[v] = value
        resolved[v] = True
        for r2 in var_rows.pop(v, ()):
            row_sets[r2].discard(v)
            if value.any():
                row_val[r2] ^= value
            if len(row_sets[r2]) == 1:
                queue.append(r2)
            elif len(row_sets[r2]) == 0 and row_val[r2].any():
                consistent &= row_val[r2] == 0

    residual_rows = [r for r, s in enumerate(row_sets) if s]
    if residual_rows:
        unknowns = sorted(set().union(*(row_sets[r] for r in residual_rows)))
        col_of = {v: j for j, v in enumerate(unknowns)}
        a = np.zeros((len(residual_rows), len(unknowns)), dtype=bool)
        rhs = np.zeros((len(residual_rows), planes), dtype=np.uint8)
        for i, r in enumerate(residual_rows):
            for v in row_sets[r]:
                a[i, col_of[v]] = True
            rhs[i] = row_val[r]
        pivot_row_of_col: dict[int, int] = {}
        pr = 0
        for col in range(len(unknowns)):
            hit = np.nonzero(a[pr:, col])[0]
            if len(hit) == 0:
                continue
            r0 = pr + int(hit[0])
            if r0 != pr:
                a[[pr, r0]] = a[[r0, pr]]
                rhs[[pr, r0]] = rhs[[r0, pr]]
            others = np.nonzero(a[:, col])[0]
            for r1 in others:
                if r1 != pr:
                    a[r1] ^= a[pr]
                    rhs[r1] ^= rhs[pr]
            pivot_row_of_col[col] = pr
            pr += 1
            if pr == len(residual_rows):
                break
        for col, v in enumerate(unknowns):
            prow = pivot_row_of_col.get(col)
            if prow is None:
                continue  # no pivot: stays unresolved
            if a[prow].sum() != 1:
                continue  # pivot row still couples free columns: not unique
            info[v] = rhs[prow]
            resolved[v] = True
        zero_rows = ~a.any(axis=1)
        if zero_rows.any():
            consistent &= (rhs[zero_rows] == 0).all(axis=0)

    return info, resolved, consistent


def _prepare_cluster_llrs(
    clusters: Mapping[int, Cluster],
    table: TransitionTable,
    params: PipelineParams,
) -> dict[int, ClusterLlr]:
    if params.llr_mode == "chandak":
        if params.crossover_p is None:
            raise ValueError("chandak llr_mode requires crossover_p")
        return {
            seed: llr_chandak(c, params.crossover_p, params.size_weights)
            for seed, c in clusters.items()
        }
    return {
        seed: llr_proposed(c, table, params.size_weights)
        for seed, c in clusters.items()
    }


def _parity_symbols(parity_nt: str) -> list[int]:
    return base_indices_to_symbols(sequence_to_indices(parity_nt))


def _seed_symbols(seed: int) -> list[int]:
    return base_indices_to_symbols(sequence_to_indices(seed_to_bases(seed)))


def _payload_bits_from_symbols(symbols: Sequence[int]) -> np.ndarray:
    return base_indices_to_bit_array(symbols_to_base_indices(symbols))


def iterative_soft_decode(
    clusters: Mapping[int, Cluster],
    seed_table: SeedSchedule,
    table: TransitionTable,
    params: PipelineParams,
    expected_payload: np.ndarray | None = None,
    cache: NeighborCache | None = None,
    cluster_llrs: Mapping[int, ClusterLlr] | None = None,
) -> DecodeReport:
    """BP-decode, RS-check, drop bad clusters, repeat (at most n_re redecodes)."""
    t_start = time.perf_counter()
    if cache is None:
        cache = NeighborCache(params.soliton)
    if cluster_llrs is None:
        cluster_llrs = _prepare_cluster_llrs(clusters, table, params)
    k_required = required_symbols(params.soliton)
    max_redecodes = params.n_re if params.redecoding_enabled else 0

    active = sorted(clusters)
    parity_syms = {s: _parity_symbols(cluster_llrs[s].rs_parity_hard) for s in active}
    seed_syms = {s: _seed_symbols(s) for s in active}

    report = DecodeReport(
        success=False, reason="", iterations_performed=0, active_clusters=len(active)
    )
    round_idx = 0
    while True:
        if len(active) < k_required:
            report.reason = (
                f"insufficient_clusters: {len(active)} active < {k_required} required"
            )
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            h = build_h(active, params.soliton, cache)
        llr_matrix = np.stack([cluster_llrs[s].payload_llrs for s in active])
        t_bp = time.perf_counter()
        bp = bp_decode(
            h,
            llr_matrix,
            max_iter=params.bp_max_iter,
            llr_clip=params.llr_clip,
            dtype=np.dtype(params.bp_dtype),
        )
        report.timing.setdefault("bp_seconds_per_round", []).append(
            time.perf_counter() - t_bp
        )
        report.iterations_performed = round_idx + 1

        payload_bytes = np.packbits(bp.coded_bits, axis=1)
        removals: list[int] = []
        seed_corrections = 0
        corrected_payload_bits: dict[int, np.ndarray] = {}
        for r, seed in enumerate(active):
            word = seed_syms[seed] + payload_bytes[r].tolist() + parity_syms[seed]
            outcome = gf_rs.rs_decode(word)
            if outcome.status == gf_rs.STATUS_DETECTED:
                removals.append(seed)
                continue
            if outcome.status == gf_rs.STATUS_CORRECTED:
                if any(p < SEED_SYMBOLS for p in outcome.corrected_positions):
                    removals.append(seed)
                    seed_corrections += 1
                    continue
                if any(
                    SEED_SYMBOLS <= p < SEED_SYMBOLS + PAYLOAD_SYMBOLS
                    for p in outcome.corrected_positions
                ):
                    corrected_payload_bits[seed] = _payload_bits_from_symbols(
                        outcome.codeword[SEED_SYMBOLS : SEED_SYMBOLS + PAYLOAD_SYMBOLS]
                    )

        if not removals:
            coded_final = bp.coded_bits.astype(np.uint8)
            for seed, bits in corrected_payload_bits.items():
                coded_final[active.index(seed)] = bits
            info, resolved, consistent = lt_erasure_solve(
                h.rows_neighbors, coded_final, params.soliton.k
            )
            if not resolved.all():
                report.reason = f"unresolved_info_bits: {int((~resolved).sum())}"
                break
            if not consistent.all():
                report.reason = f"inconsistent_planes: {int((~consistent).sum())}"
                break
            report.recovered_payload = info
            if expected_payload is not None and not np.array_equal(
                info, np.asarray(expected_payload, dtype=np.uint8)
            ):
                report.reason = "payload_mismatch"
                break
            report.success = True
            report.reason = "ok"
            break

        report.clusters_discarded_per_round.append(len(removals))
        report.removed_seeds_per_round.append(removals)
        report.seed_corrections_per_round.append(seed_corrections)
        report.clusters_with_seed_corrections_removed += seed_corrections
        if round_idx == max_redecodes:
            report.reason = (
                "rs_failures_without_redecoding"
                if max_redecodes == 0
                else f"redecode_limit_reached: {max_redecodes}"
            )
            break
        active = [s for s in active if s not in set(removals)]
        round_idx += 1

    report.active_clusters = len(active)
    report.timing["total_seconds"] = time.perf_counter() - t_start
    return report


def hard_decode_baseline(
    clusters: Mapping[int, Cluster],
    seed_table: SeedSchedule,
    params: PipelineParams,
    expected_payload: np.ndarray | None = None,
    cache: NeighborCache | None = None,
) -> DecodeReport:
    """Majority vote -> RS decode -> discard failures -> LT erasure recovery."""
    t_start = time.perf_counter()
    if cache is None:
        cache = NeighborCache(params.soliton)
    report = DecodeReport(success=False, reason="", iterations_performed=1)
    surviving_rows: list[np.ndarray] = []
    payload_rows: list[np.ndarray] = []
    discarded = 0
    for seed in sorted(clusters):
        voted = majority_vote(clusters[seed])
        word = base_indices_to_symbols(sequence_to_indices(voted))
        outcome = gf_rs.rs_decode(word)
        if outcome.status == gf_rs.STATUS_DETECTED:
            discarded += 1
            continue
        payload_rows.append(
            _payload_bits_from_symbols(
                outcome.codeword[SEED_SYMBOLS : SEED_SYMBOLS + PAYLOAD_SYMBOLS]
            )
        )
        surviving_rows.append(cache.neighbors(seed))
    report.clusters_discarded_per_round = [discarded]
    report.active_clusters = len(surviving_rows)
    if not surviving_rows:
        report.reason = "no_surviving_clusters"
        report.timing["total_seconds"] = time.perf_counter() - t_start
        return report
    info, resolved, consistent = lt_erasure_solve(
        surviving_rows, np.stack(payload_rows), params.soliton.k
    )
    if not resolved.all():
        report.reason = f"unresolved_info_bits: {int((~resolved).sum())}"
    elif not consistent.all():
        report.reason = f"inconsistent_planes: {int((~consistent).sum())}"
    else:
        report.recovered_payload = info
        if expected_payload is not None and not np.array_equal(
            info, np.asarray(expected_payload, dtype=np.uint8)
        ):
            report.reason = "payload_mismatch"
        else:
            report.success = True
            report.reason = "ok"
    report.timing["total_seconds"] = time.perf_counter() - t_start
    return report


@dataclass
class SweepReport:
    sampling_points: list[int]
    trials: int
    variants: list[str]
    successes: dict[str, list[int]]
    mean_rounds: dict[str, list[float]]
    mean_clusters_removed: dict[str, list[float]]
    wall_seconds: dict[str, list[float]]
    retained_reads_mean: list[float]

    def to_dict(self, omit_timing: bool = False) -> dict:
        out = {
            "version": 1,
            "sampling_points": self.sampling_points,
            "trials": self.trials,
            "variants": self.variants,
            "successes": self.successes,
            "mean_rounds": self.mean_rounds,
            "mean_clusters_removed": self.mean_clusters_removed,
            "retained_reads_mean": self.retained_reads_mean,
        }
        if not omit_timing:
            out["wall_seconds"] = self.wall_seconds
        return out

    def plot_rows(self) -> list[tuple[int, str, int, int]]:
        rows = []
        for i, point in enumerate(self.sampling_points):
            for name in self.variants:
                rows.append((point, name, self.successes[name][i], self.trials))
        return rows


def _derive_no_redecode(on_report: DecodeReport) -> DecodeReport:
    """The redecoding-off outcome implied by a redecoding-on run.

    Both algorithms share a deterministic first round, so the off variant
    either fails there (the on run recorded removals) or ends with the on
    run's round-1 result.
    """
    removed_r1 = on_report.clusters_discarded_per_round[:1]
    if removed_r1 and removed_r1[0] > 0:
        return DecodeReport(
            success=False,
            reason="rs_failures_without_redecoding",
            iterations_performed=1,
            clusters_discarded_per_round=removed_r1,
            clusters_with_seed_corrections_removed=on_report.seed_corrections_per_round[0],
            seed_corrections_per_round=on_report.seed_corrections_per_round[:1],
            removed_seeds_per_round=on_report.removed_seeds_per_round[:1],
            active_clusters=on_report.active_clusters,
            timing={"derived_from_redecoding_run": True},
        )
    out = DecodeReport(
        success=on_report.success,
        reason=on_report.reason,
        iterations_performed=min(on_report.iterations_performed, 1),
        recovered_payload=on_report.recovered_payload,
        active_clusters=on_report.active_clusters,
        timing={"derived_from_redecoding_run": True},
    )
    return out


def experiment_sweep(
    reads: Sequence[ReadRecord],
    seed_table: SeedSchedule,
    table: TransitionTable,
    sampling_points: Sequence[int],
    trials: int,
    variants: Mapping[str, PipelineParams],
    rng_seed: int = 0,
    expected_payload: np.ndarray | None = None,
    derive_no_redecode: bool = True,
    jobs: int = 1,
) -> SweepReport:
    """Random-subset success-count sweep; subsets are shared across variants.

    For every sampling point, `trials` uniform subsets of the raw reads are
    drawn (pre-filter, so the retained count L_m per trial is smaller), and
    every decoder variant runs on the same subset for a paired comparison.
    When a redecoding-off variant has a redecoding-on twin (same LLR mode
    and parameters), its outcome is derived from the twin's first round
    instead of re-running BP; the two computations are identical by
    construction (set derive_no_redecode=False to force separate runs).
    jobs > 1 runs trials in a thread pool (the heavy lifting is in numpy,
    which releases the GIL); results merge by trial index, so the report
    does not depend on scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    points = list(sampling_points)
    if any(p > len(reads) for p in points):
        raise ValueError(
            f"sampling point exceeds available reads ({max(points)} > {len(reads)})"
        )
    names = list(variants)
    solitons = {params.soliton for params in variants.values()}
    caches = {s: NeighborCache(s) for s in solitons}
    successes = {n: [0] * len(points) for n in names}
    rounds_acc = {n: [0.0] * len(points) for n in names}
    removed_acc = {n: [0.0] * len(points) for n in names}
    wall_acc = {n: [0.0] * len(points) for n in names}
    retained = [0.0] * len(points)

    def soft_key(p: PipelineParams) -> tuple:
        return (p.soliton, p.llr_mode, p.crossover_p, repr(p.size_weights),
                p.bp_max_iter, p.llr_clip, p.bp_dtype)

    derived_from: dict[str, str] = {}
    if derive_no_redecode:
        on_by_key = {
            soft_key(p): n
            for n, p in variants.items()
            if p.decoder == "soft" and p.redecoding_enabled
        }
        for n, p in variants.items():
            if p.decoder == "soft" and not p.redecoding_enabled:
                twin = on_by_key.get(soft_key(p))
                if twin is not None:
                    derived_from[n] = twin
    run_order = [n for n in names if n not in derived_from] + list(derived_from)

    def run_trial(pi: int, point: int, t: int) -> tuple[dict[str, DecodeReport], dict[str, float], int]:
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, pi, t]))
        idx = rng.choice(len(reads), size=point, replace=False)
        subset = [reads[i] for i in idx]
        clusters, disc = cluster_by_seed(subset, seed_table)
        llr_cache: dict[str, dict[int, ClusterLlr]] = {}
        reports: dict[str, DecodeReport] = {}
        walls: dict[str, float] = {}
        for name in run_order:
            params = variants[name]
            cache = caches[params.soliton]
            t0 = time.perf_counter()
            if name in derived_from:
                rep = _derive_no_redecode(reports[derived_from[name]])
            elif params.decoder == "hard":
                rep = hard_decode_baseline(
                    clusters, seed_table, params, expected_payload, cache
                )
            else:
                mode_key = f"{params.llr_mode}:{params.crossover_p}:{params.size_weights}"
                if mode_key not in llr_cache:
                    llr_cache[mode_key] = _prepare_cluster_llrs(clusters, table, params)
                rep = iterative_soft_decode(
                    clusters,
                    seed_table,
                    table,
                    params,
                    expected_payload,
                    cache,
                    cluster_llrs=llr_cache[mode_key],
                )
            reports[name] = rep
            walls[name] = time.perf_counter() - t0
        return reports, walls, disc.n_retained

    for pi, point in enumerate(points):
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                trial_results = list(
                    pool.map(lambda t: run_trial(pi, point, t), range(trials))
                )
        else:
            trial_results = [run_trial(pi, point, t) for t in range(trials)]
        for reports, walls, n_retained in trial_results:
            retained[pi] += n_retained / trials
            for name in names:
                rep = reports[name]
                wall_acc[name][pi] += walls[name]
                if rep.success:
                    successes[name][pi] += 1
                rounds_acc[name][pi] += rep.iterations_performed / trials
                removed_acc[name][pi] += sum(rep.clusters_discarded_per_round) / trials

    return SweepReport(
        sampling_points=points,
        trials=trials,
        variants=names,
        successes=successes,
        mean_rounds={n: [round(v, 4) for v in rounds_acc[n]] for n in names},
        mean_clusters_removed={n: [round(v, 4) for v in removed_acc[n]] for n in names},
        wall_seconds={n: [round(v, 3) for v in wall_acc[n]] for n in names},
        retained_reads_mean=[round(v, 2) for v in retained],
    )
