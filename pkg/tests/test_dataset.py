import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from cdcrl.dataset import (TransitionDataset, csv_header, from_bytes, load, load_csv,
                           normalized_score, sample_minibatch, save, save_csv, to_bytes)
from cdcrl.envs import generate_dataset, make_env
from cdcrl.errors import DegenerateReferenceError, FormatError


def tiny(n=1, dS=2, dA=1, seed=0):
    rng = np.random.default_rng(seed)
    return TransitionDataset("PointMass1D", rng.standard_normal((n, dS)),
                             rng.uniform(-1, 1, (n, dA)), rng.standard_normal(n),
                             rng.standard_normal((n, dS)), np.zeros(n, bool), np.ones(n, bool),
                             np.ones(n, bool))


def test_one_transition_round_trip(tmp_path):
    ds = tiny()
    save(ds, tmp_path / "d.cdcd")
    assert load(tmp_path / "d.cdcd").equals(ds)


@pytest.mark.parametrize("name", ["PointMass1D", "PointMass2D"])
def test_round_trip_shipped_envs(name, tmp_path):
    ds = generate_dataset(make_env(name), "medium", 300, 3)
    save(ds, tmp_path / "d.cdcd")
    back = load(tmp_path / "d.cdcd")
    assert back.equals(ds) and back.env_name == name


def test_large_round_trip_rehash(tmp_path):
    ds = generate_dataset(make_env("PointMass1D"), "random", 100_000, 0)
    save(ds, tmp_path / "a.cdcd")
    save(load(tmp_path / "a.cdcd"), tmp_path / "b.cdcd")
    h = [hashlib.sha256((tmp_path / f).read_bytes()).hexdigest() for f in ("a.cdcd", "b.cdcd")]
    assert h[0] == h[1]


def test_header_corruption_is_format_error():
    buf = bytearray(to_bytes(tiny(5)))
    bad_magic = bytearray(buf)
    bad_magic[0] ^= 0xFF
    with pytest.raises(FormatError, match="magic"):
        from_bytes(bad_magic)
    bad_version = bytearray(buf)
    bad_version[4:8] = struct.pack("<I", 99)
    with pytest.raises(FormatError, match="version 99"):
        from_bytes(bad_version)
    with pytest.raises(FormatError):
        from_bytes(buf[:-3])
    with pytest.raises(FormatError):
        from_bytes(buf[:10])
    flipped = bytearray(buf)
    flipped[40] ^= 0x01
    with pytest.raises(FormatError, match="checksum"):
        from_bytes(flipped)


def test_invariants_enforced():
    with pytest.raises(ValueError):
        tiny(0)
    base = tiny(3)
    with pytest.raises(ValueError):
        TransitionDataset("x", base.states, base.actions * 3, base.rewards, base.next_states,
                          base.terminals, base.truncated, base.episode_starts)
    with pytest.raises(ValueError):
        TransitionDataset("x", base.states, base.actions, base.rewards[:2], base.next_states,
                          base.terminals, base.truncated, base.episode_starts)
    r = base.rewards.copy()
    r[1] = np.nan
    with pytest.raises(ValueError):
        TransitionDataset("x", base.states, base.actions, r, base.next_states,
                          base.terminals, base.truncated, base.episode_starts)
    # boundary actions within tolerance are accepted
    TransitionDataset("x", base.states, np.full((3, 1), 1.0 + 5e-7), base.rewards,
                      base.next_states, base.terminals, base.truncated, base.episode_starts)


def test_csv_round_trip(tmp_path):
    ds = generate_dataset(make_env("PointMass2D"), "expert", 50, 1)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", env_name="PointMass2D")
    assert back.equals(ds)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == ",".join(csv_header(4, 2))


def test_csv_bad_header(tmp_path):
    (tmp_path / "d.csv").write_text("x,y\n1,2\n")
    with pytest.raises(FormatError):
        load_csv(tmp_path / "d.csv")


def test_minibatch_single_record():
    ds = tiny(1)
    b = sample_minibatch(ds, 1, np.random.default_rng(0))
    np.testing.assert_array_equal(b.states, ds.states)
    assert b.indices.tolist() == [0]


def test_minibatch_seeded():
    ds = tiny(50)
    a = sample_minibatch(ds, 32, np.random.default_rng(4)).indices
    b = sample_minibatch(ds, 32, np.random.default_rng(4)).indices
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        sample_minibatch(ds, 0, np.random.default_rng(0))


def test_minibatch_uniform_marginals():
    ds = tiny(10)
    rng = np.random.default_rng(2024)
    counts = np.zeros(10)
    for _ in range(10):
        counts += np.bincount(sample_minibatch(ds, 100_000, rng).indices, minlength=10)
    freq = counts / counts.sum()
    se = np.sqrt(0.1 * 0.9 / counts.sum())
    assert np.all(np.abs(freq - 0.1) <= 3 * se)
    assert stats.chisquare(counts).pvalue > 0.001


def test_normalized_score_anchors():
    assert normalized_score(-40.0, -40.0, -10.0) == 0.0
    assert normalized_score(-10.0, -40.0, -10.0) == 100.0
    assert normalized_score(-25.0, -40.0, -10.0) == pytest.approx(50.0, abs=1e-12)
    with pytest.raises(DegenerateReferenceError):
        normalized_score(1.0, 3.0, 3.0)


finite = st.floats(-1e3, 1e3)


@given(finite, finite, finite, st.floats(0.1, 10), st.floats(-5, 5))
def test_normalized_score_affine(x, y, lo, gap, beta):
    hi = lo + gap
    d = normalized_score(x, lo, hi) - normalized_score(y, lo, hi)
    assert d == pytest.approx(100.0 * (x - y) / gap, rel=1e-9, abs=1e-7)
    # shifting everything leaves the score unchanged
    assert normalized_score(x + beta, lo + beta, hi + beta) == pytest.approx(
        normalized_score(x, lo, hi), rel=1e-9, abs=1e-6)
