import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sbcontract import _pykernels
from sbcontract._backend import BACKEND

ext = pytest.importorskip("sbcontract._ext", reason="compiled extension not built")

seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(1, 40)


@given(seeds, sizes, sizes)
def test_lse_rows_agree(seed, k, m):
    rng = np.random.default_rng(seed)
    logK = rng.normal(scale=30.0, size=(k, m))
    v = rng.normal(scale=30.0, size=m)
    a = _pykernels.lse_rows(logK, v)
    b = ext.lse_rows(logK, v)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)


def test_lse_rows_neg_inf():
    logK = np.array([[-np.inf, 0.0], [-np.inf, -np.inf]])
    v = np.zeros(2)
    a = _pykernels.lse_rows(logK, v)
    b = np.asarray(ext.lse_rows(logK, v))
    assert a[0] == pytest.approx(b[0]) and np.isneginf(a[1]) and np.isneginf(b[1])


@given(seeds, sizes, sizes, st.integers(1, 4))
def test_sqdist_extrema_agree(seed, k, m, n):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(k, n))
    Q = rng.normal(size=(m, n))
    a = _pykernels.sqdist_extrema(P, Q)
    b = ext.sqdist_extrema(P, Q)
    assert a[0] == pytest.approx(b[0], rel=1e-12) and a[3] == pytest.approx(b[3], rel=1e-12, abs=1e-14)
    D = ((P[:, None] - Q[None]) ** 2).sum(-1)
    assert D[b[1], b[2]] == pytest.approx(a[0], rel=1e-12)
    assert D[b[4], b[5]] == pytest.approx(a[3], rel=1e-12, abs=1e-14)


def test_sqdist_ties_first_pair():
    P = np.zeros((3, 2))
    Q = np.ones((2, 2))
    assert tuple(_pykernels.sqdist_extrema(P, Q)) == tuple(ext.sqdist_extrema(P, Q)) == (2.0, 0, 0, 2.0, 0, 0)


@given(seeds, sizes, sizes, st.integers(1, 4))
def test_mixture_stats_agree(seed, k, m, n):
    rng = np.random.default_rng(seed)
    Z = rng.normal(scale=3.0, size=(k, n))
    C = rng.normal(scale=3.0, size=(m, n))
    logc = rng.normal(scale=5.0, size=m)
    la, ma = _pykernels.mixture_stats(Z, C, logc)
    lb, mb = ext.mixture_stats(Z, C, logc)
    assert np.allclose(la, lb, rtol=1e-12, atol=1e-12)
    assert np.allclose(ma, mb, rtol=1e-10, atol=1e-12)


def test_default_backend_is_compiled():
    assert BACKEND == "cython"


def test_env_var_selects_fallback():
    env = dict(os.environ, SBCONTRACT_BACKEND="python")
    res = subprocess.run(
        [sys.executable, "-c", "import sbcontract; print(sbcontract.BACKEND)"],
        capture_output=True, text=True, env=env,
    )
    assert res.returncode == 0 and res.stdout.strip() == "python"


def test_solver_agrees_across_backends(tmp_path):
    """Same pass count and telemetry; late ratios sit near the rounding floor."""
    from sbcontract.scenario import shipped_scenario_path

    solves, rows = {}, {}
    for be in ("python", "cython"):
        env = dict(os.environ, SBCONTRACT_BACKEND=be)
        out, tel = tmp_path / f"{be}.json", tmp_path / f"{be}.csv"
        cmd = [sys.executable, "-m", "sbcontract", "solve", "--scenario", str(shipped_scenario_path()),
               "--out", str(out), "--telemetry", str(tel)]
        assert subprocess.run(cmd, capture_output=True, env=env).returncode == 0
        solves[be] = json.loads(out.read_text())["solve"]
        rows[be] = np.loadtxt(tel, delimiter=",", skiprows=1, usecols=(0, 1))
    assert solves["python"]["passes"] == solves["cython"]["passes"]
    assert np.allclose(rows["python"][:4, 1], rows["cython"][:4, 1], rtol=1e-8)
    assert solves["python"]["kappa_hat"] == pytest.approx(solves["cython"]["kappa_hat"], rel=1e-2)
