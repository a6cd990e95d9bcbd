"""Smoke test for the sadam extension module.

Build first, either with `maturin develop -m crates/py/Cargo.toml` or by
copying target/release/libsadam.so next to this file as sadam.so.
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import sadam  # noqa: E402


def test_shuffle_preserves_entries():
    g = [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]
    out, perm = sadam.shuffle(g, 7)
    assert sorted(perm) == [0, 1, 2, 3]
    for row_in, row_out in zip(g, out):
        assert [row_in[p] for p in perm] == row_out
    assert math.isclose(sadam.frobenius_norm(out), sadam.frobenius_norm(g), rel_tol=1e-12)


def test_decompose_traces():
    s = sadam.generate_synthetic(rows=16, cols=20, ranks=[4, 2], seed=3)
    assert len(s) == 16 and len(s[0]) == 20
    traces = sadam.decompose(s, method="sadam", iters=20, ranks=[4, 2], seed=1)
    assert len(traces) == 2
    for t in traces:
        assert t.method == "sadam"
        assert len(t) == 21
        assert t.iterations == list(range(21))
        assert all(math.isfinite(x) for x in t.losses)
        assert t.final_loss() <= t.losses[0]
        assert t.shuffle_count() == sum(t.shuffle_fired)


def test_analysis():
    r = sadam.icc([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    assert math.isclose(r["icc"], 1.0)
    mean, std, text = sadam.timing_summary("adam", [10.0, 12.0])
    assert math.isclose(mean, 11.0) and "±" in text
    losses = [10.0] + [t ** -2.0 for t in range(1, 200)]
    p, _, r2 = sadam.fit_rate(losses, 0.0)
    assert abs(p - 2.0) < 1e-6 and r2 > 0.999


def test_errors():
    try:
        sadam.frobenius_norm([[1.0, 2.0], [3.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged matrix accepted")
    try:
        sadam.decompose([[1.0]], method="storm")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown method accepted")


def test_verify():
    passed, text = sadam.verify(0)
    assert passed, text


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
