"""Smoke test for the Python bindings: the hierarchical solve matches the direct
solve and a field written by the command-line tool reads back."""

import math
import os
import subprocess
import sys
import tempfile

import helmprop


def rel_diff(a, b):
    num = sum(abs(x - y) ** 2 for ra, rb in zip(a, b) for x, y in zip(ra, rb))
    den = sum(abs(y) ** 2 for rb in b for y in rb)
    return math.sqrt(num / den)


def check_solver():
    s = helmprop.Solver([2000.0, 1500.0, 2000.0], n_levels=2, block_cells=16, workers=2)
    lo, hi = s.interior
    i, j = lo + (hi - lo) // 3, lo + 2 * (hi - lo) // 3
    u, residual = s.solve(i, j)
    assert len(u) == s.cells + 1 and len(u[0]) == s.cells + 1
    assert residual < 1e-6, residual
    err = rel_diff(u, s.direct(i, j))
    assert err < 1e-6, err
    try:
        s.solve(0, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("boundary source accepted")
    print(f"solver: cells {s.cells}, residual {residual:.2e}, error vs direct {err:.2e}")


def check_fld2(cli):
    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "run.cfg")
        with open(cfg, "w") as f:
            f.write(
                "model = m.velm\nfrequency = 15\nn_levels = 1\nblock_cells = 16\n"
                "model_kind = constant\nmodel_speeds = 1500\n"
            )
        out = os.path.join(d, "out")
        for cmd in ("gen-model", "solve"):
            subprocess.run([cli, cmd, "--config", cfg, "--out", out], check=True, capture_output=True)
        rows, hx, hy = helmprop.read_fld2(os.path.join(out, "field.fld2"))
        assert len(rows) == 49 and hx == hy > 0
        assert max(abs(v) for r in rows for v in r) > 0
        print(f"fld2: {len(rows)}x{len(rows[0])} samples, h = {hx:.4f}")


if __name__ == "__main__":
    check_solver()
    if len(sys.argv) > 1:
        check_fld2(sys.argv[1])
    print("smoke test passed")
