import itertools

import numpy as np
import pytest

import wsm


def test_windowed_mean_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 4))
    k = 3
    got = wsm.windowed_mean(x, k)
    want = np.stack([x[max(0, t - k) : t + k + 1].mean(axis=0) for t in range(30)])
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_windowed_mean_zero_pad_divides_by_window():
    x = np.ones((5, 2))
    got = wsm.windowed_mean(x, 1, boundary="zero-pad")
    assert got[0, 0] == pytest.approx(2 / 3)
    assert got[2, 0] == pytest.approx(1.0)


def test_windowed_mean_rejects_bad_rank():
    with pytest.raises(wsm.DimensionError):
        wsm.windowed_mean(np.ones(4), 1)


def test_ctc_loss_matches_enumeration():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(4, 3))
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    labels = [1, 2]

    def collapse(path):
        out = [c for c, _ in itertools.groupby(path)]
        return [c for c in out if c != 0]

    total = sum(
        np.exp(sum(log_probs[t, c] for t, c in enumerate(path)))
        for path in itertools.product(range(3), repeat=4)
        if collapse(path) == labels
    )
    assert wsm.ctc_loss(log_probs, labels) == pytest.approx(-np.log(total), abs=1e-10)


def test_ctc_infeasible_target():
    with pytest.raises(wsm.InfeasibleTargetError):
        wsm.ctc_loss(np.log(np.full((2, 3), 1 / 3)), [1, 1])


def test_greedy_decode():
    lp = np.log(np.array([[0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.9, 0.05, 0.05], [0.1, 0.1, 0.8]]))
    assert wsm.greedy_decode(lp) == [1, 2]


def test_memory_model_scales():
    att = [wsm.peak_activation_memory("Attention", t) for t in (2048, 4096)]
    w = [wsm.peak_activation_memory("WSM", t) for t in (2048, 4096)]
    assert att[1] / att[0] >= 3.4
    assert w[1] / w[0] <= 2.2
    assert w[0] < att[0]


def test_bench_and_slope():
    records = wsm.run_scaling_bench(["WSM"], [16, 32, 64, 128], repeats=3, d_model=8, heads=2)
    assert [r["T"] for r in records] == [16, 32, 64, 128]
    assert all(r["median_ns"] > 0 for r in records)
    assert wsm.fit_loglog_slope([1, 2, 4, 8], [3.0, 6.0, 12.0, 24.0]) == pytest.approx(1.0)
    with pytest.raises(wsm.FitError):
        wsm.fit_loglog_slope([1, 2], [1.0, 2.0])


def test_check_suites_pass():
    for result in wsm.oracle_suite(3) + wsm.gradcheck_suite(3):
        assert result["passed"], result


def test_cli_usage_error_and_oracle(tmp_path):
    code, _, err = wsm.run_cli(["bench", "--lengths", "64,32"])
    assert code == 2
    assert err
    code, out, _ = wsm.run_cli(["--out-dir", str(tmp_path), "oracle"])
    assert code == 0
    assert "PASS" in out
    assert (tmp_path / "oracle.csv").read_text().startswith("suite,name,cases,max_error")
