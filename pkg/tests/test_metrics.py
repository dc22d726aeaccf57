import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from robusttts import dsp, metrics
from robusttts.errors import InvalidInput

from conftest import harmonic


def all_paths(n, m):
    """Every monotone path from (0,0) to (n-1,m-1) with unit diagonal/vertical/horizontal steps."""
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                for rest in walk(i + di, j + dj):
                    yield [(i, j)] + rest
    return list(walk(0, 0))


def path_cost(a, b, path):
    return sum(float(np.linalg.norm(a[i] - b[j])) for i, j in path)


class TestCepstra:
    def test_constant_frame(self):
        c = metrics.mel_cepstra(np.full((4, 80), -3.2))
        assert np.allclose(c, 0, atol=1e-12)

    def test_default_width(self):
        assert metrics.mel_cepstra(np.zeros((2, 80))).shape == (2, 13)
        assert metrics.mel_cepstra(np.zeros((2, 80)), 24).shape == (2, 24)

    @given(hnp.arrays(np.float64, (3, 80), elements=st.floats(-10, 10)),
           hnp.arrays(np.float64, (3, 80), elements=st.floats(-10, 10)), st.floats(-3, 3))
    def test_linear(self, x, y, k):
        lhs = metrics.mel_cepstra(x + k * y)
        rhs = metrics.mel_cepstra(x) + k * metrics.mel_cepstra(y)
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_bad_order(self):
        with pytest.raises(InvalidInput):
            metrics.mel_cepstra(np.zeros((2, 80)), 80)


class TestDTW:
    def test_identical(self):
        a = np.random.default_rng(0).normal(size=(9, 4))
        path, cost = metrics.dtw_align(a, a)
        assert path == [(i, i) for i in range(9)] and cost == 0.0

    def test_duplicated_frame(self):
        a = np.random.default_rng(1).normal(size=(6, 3))
        b = np.insert(a, 3, a[3], axis=0)
        path, cost = metrics.dtw_align(a, b)
        assert cost == 0.0 and len(path) == 7

    def test_brute_force(self):
        rng = np.random.default_rng(2)
        cache = {}
        for case in range(1000):
            n, m = rng.integers(1, 6, size=2)
            a = rng.normal(size=(n, 2))
            b = rng.normal(size=(m, 2))
            paths = cache.setdefault((n, m), all_paths(n, m))
            best = min(path_cost(a, b, p) for p in paths)
            path, cost = metrics.dtw_align(a, b)
            assert path in paths
            assert cost == pytest.approx(best, abs=1e-9)
            assert path_cost(a, b, path) == pytest.approx(best, abs=1e-9)

    def test_empty(self):
        with pytest.raises(InvalidInput):
            metrics.dtw_align(np.zeros((0, 3)), np.zeros((2, 3)))


class TestMCD:
    def test_identity(self):
        c = np.random.default_rng(3).normal(size=(10, 13))
        assert metrics.mcd(c, c) == 0.0

    def test_unit_coefficient(self):
        a = np.zeros((5, 13))
        b = a.copy()
        b[:, 0] = 1.0
        assert metrics.mcd(a, b) == pytest.approx(6.1419, abs=1e-3)

    @given(st.integers(0, 1000))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(7, 13)), rng.normal(size=(5, 13))
        assert metrics.mcd(a, b) == pytest.approx(metrics.mcd(b, a), abs=1e-9)

    @given(st.integers(0, 1000))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        assert metrics.mcd(rng.normal(size=(4, 13)), rng.normal(size=(6, 13))) >= 0


class TestLogF0:
    def test_identity(self):
        f = np.array([0, 120.0, 130, 0, 140])
        assert metrics.log_f0_rmse(f, f) == (0.0, 3)

    def test_octave(self):
        f = np.array([100.0, 150, 0, 220])
        value, n = metrics.log_f0_rmse(f, 2 * f)
        assert value == pytest.approx(math.log(2), abs=1e-6) and n == 3

    def test_unvoiced(self):
        assert metrics.log_f0_rmse(np.zeros(5), np.array([0, 100.0, 0, 0, 0])) == (None, 0)

    @given(st.floats(0.25, 4.0), st.integers(0, 100))
    def test_scale_invariant(self, k, seed):
        rng = np.random.default_rng(seed)
        r, s = rng.uniform(80, 300, 8), rng.uniform(80, 300, 8)
        assert metrics.log_f0_rmse(k * r, k * s)[0] == pytest.approx(metrics.log_f0_rmse(r, s)[0], abs=1e-9)

    def test_path_pairs(self):
        r, s = np.array([100.0, 200.0]), np.array([100.0, 100.0, 200.0])
        value, n = metrics.log_f0_rmse(r, s, [(0, 0), (0, 1), (1, 2)])
        assert value == 0.0 and n == 3


class TestReport:
    def waves(self):
        return {f"u{i}": harmonic(110 + 20 * i, 0.4) for i in range(4)}

    def test_self_check(self):
        waves = self.waves()
        items = [("u0", "clean"), ("u1", "clean"), ("u2", "noise"), ("u3", "reverb")]
        report = metrics.evaluate_corpus(items, waves.__getitem__, None)
        assert [r.condition for r in report.rows] == ["clean", "noise", "reverb"]
        assert [r.n_utterances for r in report.rows] == [2, 1, 1]
        assert all(r.mcd_mean == 0.0 for r in report.rows)
        assert all(r.logf0_rmse_mean in (0.0, None) for r in report.rows)
        assert report.config["self_check"] is True

    def test_failures_mark_partial(self):
        waves = self.waves()

        def synth(uid):
            if uid == "u1":
                raise RuntimeError("boom")
            return waves[uid]

        report = metrics.evaluate_corpus([("u0", "clean"), ("u1", "clean")], waves.__getitem__, synth)
        row = report.rows[0]
        assert row.partial and row.n_failed == 1 and row.n_utterances == 1
        doc = json.loads(report.to_json())
        assert doc["rows"][0]["partial"] is True
        assert "boom" in doc["utterances"][1]["error"]
        assert "(partial)" in report.to_table()

    def test_table_columns(self):
        waves = self.waves()
        table = metrics.evaluate_corpus([("u0", "noise")], waves.__getitem__, None).to_table()
        assert table.splitlines()[0].split()[:2] == ["Condition", "N"]
        assert "0.000" in table

    def test_different_audio_positive(self):
        a, b = harmonic(120, 0.4), harmonic(180, 0.4)
        d, rmse, n = metrics.score_pair(a, b)
        assert d > 0 and n > 0
        assert rmse == pytest.approx(math.log(1.5), abs=0.05)
