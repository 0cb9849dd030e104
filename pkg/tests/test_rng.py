from hypothesis import given, strategies as st

from tips import rng as rngmod


def test_streams_are_keyed():
    a = rngmod.stream(1, 2, 3).random(4)
    assert (a == rngmod.stream(1, 2, 3).random(4)).all()
    assert not (a == rngmod.stream(1, 2, 4).random(4)).any()
    assert not (a == rngmod.stream(2, 2, 3).random(4)).any()


def test_derive_seed_is_stable_and_bounded():
    s = rngmod.derive_seed(7, 1, 2)
    assert s == rngmod.derive_seed(7, 1, 2)
    assert 0 <= s < 2**63
    assert s != rngmod.derive_seed(7, 2, 1)


@given(st.integers(0, 5000), st.integers(1, 600))
def test_blocks_cover_items(n, size):
    spec = rngmod.blocks(n, size)
    covered = [i for _, lo, hi in spec for i in range(lo, hi)]
    assert covered == list(range(n))
    assert [b for b, _, _ in spec] == list(range(len(spec)))


def _draws(seed, b, lo, hi):
    g = rngmod.stream(seed, 0, b)
    return [float(g.random()) for _ in range(lo, hi)]


def test_map_blocks_independent_of_workers():
    from functools import partial
    fn = partial(_draws, 5)
    serial = rngmod.map_blocks(fn, 1000, 1)
    assert serial == rngmod.map_blocks(fn, 1000, 2) == rngmod.map_blocks(fn, 1000, 3)


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv(rngmod.WORKERS_ENV, "3")
    assert rngmod.default_workers() == 3
    monkeypatch.setenv(rngmod.WORKERS_ENV, "junk")
    assert rngmod.default_workers() == 1
    monkeypatch.delenv(rngmod.WORKERS_ENV)
    assert rngmod.default_workers() == 1
