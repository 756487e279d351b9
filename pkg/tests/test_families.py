import pytest

from expansionlab.families import ALL, build, margulis_refining, resolve


def test_registry_builds_everything():
    fams = resolve("all")
    assert [f.name for f in fams] == list(ALL)
    assert all(f.n_atoms >= 2 for f in fams)


def test_resolve_list_and_unknown():
    assert [f.name for f in resolve("cycle:5;swap")] == ["cycle:5", "swap"]
    with pytest.raises(KeyError):
        build("nonsense:3")


def test_margulis_refining_sizes():
    out = margulis_refining()
    assert [n for n, *_ in out] == [2, 4, 8, 16]
    assert [t for *_, t in out] == [4.0, 16.0, 64.0, 256.0]
    assert out[-1][1].n == 256
