import numpy as np
import pytest

from oligolab.channel_sim import (
    ChannelConfig,
    QscoreModel,
    bias_from_table,
    corrupt_batch,
    corrupt_read,
    default_transition_bias,
    format_events,
    load_truth,
    parse_events,
    replay_events,
    sample_abundances,
    simulate_pool,
)
from oligolab.channel_stats import TransitionTable
from oligolab.dna_codec import assemble_oligo
from oligolab.fastq_io import parse_fastq


@pytest.fixture(scope="module")
def pool_seqs():
    rng = np.random.default_rng(0)
    return [
        assemble_oligo(s, rng.integers(0, 2, size=256, dtype=np.uint8)).sequence
        for s in range(12)
    ]


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(sub_rate=-0.1, ins_rate=0, del_rate=0)
    with pytest.raises(ValueError):
        ChannelConfig(sub_rate=0, ins_rate=0, del_rate=0, abundance_sigma=-1)
    with pytest.raises(ValueError):
        ChannelConfig(sub_rate=0, ins_rate=0, del_rate=0,
                      transition_bias=np.ones((10, 4, 4)))


def test_reference_error_profiles():
    b = ChannelConfig.profile_data_b()
    assert b.sub_rate == 8.352e-4
    assert abs(b.ins_rate + b.del_rate - 1.744e-5) < 1e-20
    a = ChannelConfig.profile_data_a()
    assert a.sub_rate == 9.858e-4
    assert abs(a.ins_rate + a.del_rate - 1.237e-5) < 1e-20


def test_abundances_sum_and_uniform():
    cfg = ChannelConfig(sub_rate=0, ins_rate=0, del_rate=0, abundance_sigma=0.0, rng_seed=1)
    counts = sample_abundances(100, 50_000, cfg)
    assert counts.sum() == 50_000
    # sigma 0 leaves only multinomial noise around the uniform mean
    assert abs(counts.mean() - 500) < 1e-9
    assert counts.std() < 5 * np.sqrt(500)


def test_abundances_dropout_matches_direct_simulation():
    # dropout fraction under skew vs an independent monte-carlo oracle
    sigma, n, total = 1.0, 1000, 3000
    cfg = ChannelConfig(sub_rate=0, ins_rate=0, del_rate=0, abundance_sigma=sigma, rng_seed=2)
    rng = np.random.default_rng(3)
    observed = np.mean(
        [(sample_abundances(n, total, cfg, rng) == 0).mean() for _ in range(40)]
    )
    oracle_rng = np.random.default_rng(4)
    oracle = []
    for _ in range(40):
        w = np.exp(sigma * oracle_rng.standard_normal(n))
        p = w / w.sum()
        oracle.append(np.exp(total * np.log1p(-p)).mean())  # P(count_i = 0) ~ (1-p_i)^total
    assert abs(observed - np.mean(oracle)) < 0.02


def test_zero_rates_identity(pool_seqs):
    cfg = ChannelConfig(sub_rate=0.0, ins_rate=0.0, del_rate=0.0)
    bases, q, events = corrupt_read(pool_seqs[0], cfg, np.random.default_rng(5))
    assert bases == pool_seqs[0]
    assert len(bases) == 152
    assert events == []
    assert len(q) == 152


def test_substitution_rate_statistical(pool_seqs):
    cfg = ChannelConfig(sub_rate=5e-3, ins_rate=0.0, del_rate=0.0, rng_seed=6)
    rng = np.random.default_rng(6)
    bases, _, events = corrupt_batch(pool_seqs[0], 20_000, cfg, rng)
    n_sub = sum(len(ev) for ev in events)
    rate = n_sub / (20_000 * 152)
    assert abs(rate / 5e-3 - 1) < 0.05
    # events are real mismatches
    mism = sum(
        sum(a != b for a, b in zip(read, pool_seqs[0])) for read in bases
    )
    assert mism == n_sub


def test_deletions_change_length(pool_seqs):
    cfg = ChannelConfig(sub_rate=0.0, ins_rate=0.0, del_rate=5e-3, rng_seed=7)
    bases, _, events = corrupt_batch(pool_seqs[0], 3000, cfg, np.random.default_rng(7))
    lengths = {len(b) for b in bases}
    assert 151 in lengths  # some reads lost a base
    for b, ev in zip(bases, events):
        dels = sum(1 for e in ev if e[0] == "D")
        assert len(b) == 152 - dels


def test_replay_reproduces_reads(pool_seqs):
    cfg = ChannelConfig(sub_rate=0.01, ins_rate=2e-3, del_rate=2e-3, rng_seed=8)
    bases, _, events = corrupt_batch(pool_seqs[1], 4000, cfg, np.random.default_rng(8))
    for b, ev in zip(bases, events):
        assert replay_events(pool_seqs[1], ev) == b


def test_event_format_roundtrip():
    events = [("S", 17, "C"), ("I", 40, "G"), ("D", 88)]
    assert parse_events(format_events(events)) == events
    assert format_events([]) == "-"
    assert parse_events("-") == []


def test_qscore_model_separates_errors(pool_seqs):
    qm = QscoreModel(p_err_high_q=0.0)
    cfg = ChannelConfig(sub_rate=0.05, ins_rate=0, del_rate=0, qmodel=qm, rng_seed=9)
    bases, qs, events = corrupt_batch(pool_seqs[2], 2000, cfg, np.random.default_rng(9))
    err_q = []
    ok_q = []
    for b, q, ev in zip(bases, qs, events):
        errs = {e[1] for e in ev}
        for i in range(152):
            (err_q if i in errs else ok_q).append(q[i])
    assert np.mean(err_q) < 20
    assert np.mean(ok_q) > 33


def test_miscalibration_gives_high_q_errors(pool_seqs):
    qm = QscoreModel(p_err_high_q=0.5)
    cfg = ChannelConfig(sub_rate=0.05, ins_rate=0, del_rate=0, qmodel=qm, rng_seed=10)
    _, qs, events = corrupt_batch(pool_seqs[2], 500, cfg, np.random.default_rng(10))
    high_q_errors = 0
    for q, ev in zip(qs, events):
        for e in ev:
            if q[e[1]] >= 30:
                high_q_errors += 1
    assert high_q_errors > 0


def test_simulate_pool_deterministic(tmp_path, pool_seqs):
    cfg = ChannelConfig(sub_rate=1e-3, ins_rate=1e-4, del_rate=1e-4, rng_seed=11)
    out = []
    for run in (1, 2):
        fq = tmp_path / f"run{run}.fastq"
        tr = tmp_path / f"run{run}.tsv"
        simulate_pool(pool_seqs, 2000, cfg, fq, tr)
        out.append((fq.read_bytes(), tr.read_bytes()))
    assert out[0] == out[1]


def test_simulate_pool_truth_covers_all_reads(tmp_path, pool_seqs):
    cfg = ChannelConfig(sub_rate=5e-3, ins_rate=5e-4, del_rate=5e-4, rng_seed=12)
    fq = tmp_path / "sim.fastq"
    tr = tmp_path / "truth.tsv"
    sp = simulate_pool(pool_seqs, 1500, cfg, fq, tr)
    truth = load_truth(tr)
    n = 0
    for rec in parse_fastq(fq):
        idx, events = truth[rec.id]
        assert replay_events(pool_seqs[idx], events) == rec.bases
        n += 1
    assert n == sp.n_reads == 1500
    assert sp.abundances.sum() == 1500


def test_default_bias_rows_normalized():
    bias = default_transition_bias()
    off = bias.sum(axis=2)
    assert np.allclose(off, 1.0)
    assert (bias >= 0).all()
    for b in range(4):
        assert np.allclose(bias[:, b, b], 0.0)


def test_bias_from_table_roundtrip_shape():
    table = TransitionTable.uniform()
    fwd = bias_from_table(table)
    assert fwd.shape == (152, 4, 4)
    assert np.allclose(fwd.sum(axis=2), 1.0)
