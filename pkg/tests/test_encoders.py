import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from catenc import encoders as E
from catenc.errors import ConfigError, DivisionByZeroError, FormatError, ShapeError

from oracles import naive_m_estimate, naive_ordered, naive_pozzolo, tally

X4 = np.array([0, 0, 0, 1])  # A, A, A, B
Y4 = np.array([1, 0, 1, 0])


@pytest.fixture
def stats4():
    return E.compute_stats(X4, Y4)


def test_compute_stats_hand_count(stats4):
    assert stats4.n_i.tolist() == [3, 1]
    assert stats4.n_iy.tolist() == [2, 0]
    assert (stats4.n_tr, stats4.n_y, stats4.p_prior) == (4, 2, 0.5)


def test_compute_stats_all_negative():
    s = E.compute_stats(np.array([0, 1, 1, 2]), np.zeros(4, dtype=int))
    assert s.p_prior == 0
    assert s.p_fraud.tolist() == [0, 0, 0]


def test_compute_stats_matches_tally():
    rng = np.random.default_rng(11)
    x = rng.integers(0, 37, 1000)
    y = (rng.random(1000) < 0.3).astype(int)
    s = E.compute_stats(x, y)
    n_i, n_iy = tally(x.tolist(), y.tolist())
    for c in range(len(s.n_i)):
        assert s.n_i[c] == n_i.get(c, 0)
        assert s.n_iy[c] == n_iy.get(c, 0)
    assert s.n_i.sum() == s.n_tr == 1000
    assert s.n_iy.sum() == s.n_y


def test_compute_stats_shape_errors():
    with pytest.raises(ShapeError):
        E.compute_stats(np.array([0, 1]), np.array([1]))
    with pytest.raises(ShapeError):
        E.compute_stats(np.array([], dtype=int), np.array([], dtype=int))


def test_target_encoder(stats4):
    enc = E.fit_target(stats4, k=1, f=1)
    lam3 = 1 / (1 + math.exp(-2))
    assert enc.mapping[0] == pytest.approx(lam3 * 2 / 3 + (1 - lam3) * 0.5, abs=1e-12)
    assert enc.mapping[0] == pytest.approx(0.6468, abs=1e-4)
    # n_i == k puts the sigmoid at its midpoint
    mid = E.fit_target(stats4, k=3, f=2.5)
    assert mid.lam[0] == 0.5
    assert mid.mapping[0] == pytest.approx((2 / 3 + 0.5) / 2, abs=1e-15)
    assert enc.fallback == 0.5
    with pytest.raises(ConfigError):
        E.fit_target(stats4, f=0)


def test_target_lambda_monotone_and_limit():
    lam = E.target_lambda(np.arange(0, 200), k=5, f=3)
    assert np.all(np.diff(lam) >= 0)
    assert lam[-1] == pytest.approx(1.0)


def test_m_estimate(stats4):
    enc = E.fit_m_estimate(stats4, m=1)
    assert enc.mapping[0] == pytest.approx(0.625, abs=1e-12)
    assert enc.mapping[1] == pytest.approx(0.25, abs=1e-12)
    raw = E.fit_m_estimate(stats4, m=0)
    assert raw.mapping == {0: 2 / 3, 1: 0.0}
    far = E.fit_m_estimate(stats4, m=1e12)
    assert far.mapping[0] == pytest.approx(0.5, abs=1e-9)
    with pytest.raises(ConfigError):
        E.fit_m_estimate(stats4, m=-1)


def test_james_stein(stats4):
    enc = E.fit_james_stein(stats4)
    v0 = 0.25 / 4
    va = (2 / 3) * (1 / 3) / 3
    lam = v0 / (v0 + va)
    assert enc.lam[0] == pytest.approx(lam, abs=1e-15)
    assert lam == pytest.approx(0.4576, abs=1e-4)
    assert enc.mapping[0] == pytest.approx(0.5763, abs=1e-4)
    # category B is pure (p=0) so its variance is 0 and lambda is 1
    assert enc.lam[1] == 1.0 and enc.mapping[1] == 0.0
    with pytest.raises(ConfigError):
        E.fit_james_stein(E.compute_stats(np.array([0]), np.array([1])))


def test_james_stein_symmetric_and_limit():
    # equal variances: category of 8 rows with p=0.5 vs prior 0.5 over 8 rows
    s = E.CategoryStats(np.array([8]), np.array([4]), 8, 4)
    assert E.james_stein_lambda(s)[0] == 0.5
    # huge category with non-degenerate rate: lambda -> 1
    s = E.CategoryStats(np.array([10**9, 10]), np.array([3 * 10**8, 5]), 10**9 + 10, 3 * 10**8 + 5)
    lam = E.james_stein_lambda(s)
    assert lam[0] > 0.49  # same order as the prior's own variance
    # huge category with a tiny but non-zero rate: its variance ~1e-18 vanishes next to the prior's
    s = E.CategoryStats(np.array([10**9, 10**3]), np.array([1, 500]), 10**9 + 10**3, 501)
    assert E.james_stein_lambda(s)[0] > 0.99


def test_pozzolo_extremes():
    x = np.array([0] * 6 + [1] * 3 + [2])
    y = np.array([1, 0, 1, 0, 0, 0, 1, 1, 0, 1])
    s = E.compute_stats(x, y)
    enc = E.fit_pozzolo(s, "lambda1")
    assert enc.lam[0] == 1.0 and enc.mapping[0] == pytest.approx(2 / 6)
    assert enc.lam[2] == 0.0 and enc.mapping[2] == s.p_prior
    equal = E.fit_pozzolo(E.compute_stats(np.array([0, 1]), np.array([1, 0])), "lambda2")
    assert equal.lam == {0: 0.5, 1: 0.5}


def test_pozzolo_lambda2_skewed_three_categories():
    # 99% / 0.5% / 0.5% of 1000 rows
    x = np.array([0] * 990 + [1] * 5 + [2] * 5)
    y = np.zeros(1000, dtype=int)
    y[:10] = 1
    y[990] = 1
    s = E.compute_stats(x, y)
    l1 = E.pozzolo_lambda(s, "lambda1")
    l2 = E.pozzolo_lambda(s, "lambda2", 1e-9)
    oracle = naive_pozzolo(x.tolist(), y.tolist(), "lambda2", 1e-9)
    # unclamped arithmetic: log(1e-9) / log(0.985 + 1e-9) ~ 1371.16, so rare categories clamp to 1
    assert math.log(1e-9) / math.log(0.985 + 1e-9) == pytest.approx(1371.16, rel=1e-5)
    assert [oracle[c][0] for c in range(3)] == [1.0, 1.0, 1.0]
    assert l2.tolist() == [1.0, 1.0, 1.0]
    assert l1.tolist() == [1.0, 0.0, 0.0]
    assert l2[1] == l2[2] and l2[1] > l1[1]


def test_pozzolo_empty():
    with pytest.raises(ConfigError):
        E.fit_pozzolo(E.CategoryStats(np.array([], dtype=int), np.array([], dtype=int), 0, 0))


def test_woe_hand_values(stats4):
    a = E.woe_value(2, 3, 2, 4, 0.0)
    assert a == pytest.approx(math.log(0.5), abs=1e-12)
    enc = E.fit_woe(stats4, gamma=0.5)
    assert enc.mapping[1] == pytest.approx(math.log(3), abs=1e-12)
    with pytest.raises(DivisionByZeroError) as info:
        E.fit_woe(stats4, gamma=0)
    assert info.value.category == 1


def test_woe_neutral_category_and_fallback():
    # both categories carry the global 1:3 fraud/non-fraud composition
    x = np.array([0] * 4 + [1] * 8)
    y = np.array([1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0])
    s = E.compute_stats(x, y)
    enc = E.fit_woe(s, gamma=0)
    assert enc.mapping[0] == pytest.approx(0.0, abs=1e-15)
    assert enc.fallback == 0.0
    enc = E.fit_woe(s, gamma=0.5)
    assert enc.fallback == pytest.approx(math.log((3 + 1) / (9 + 1)))


def test_woe_label_swap_negates():
    rng = np.random.default_rng(4)
    x = rng.integers(0, 6, 40)
    y = np.array([1, 0] * 20)
    a = E.fit_woe(E.compute_stats(x, y), 0.5)
    b = E.fit_woe(E.compute_stats(x, 1 - y), 0.5)
    for c in a.mapping:
        assert a.mapping[c] == pytest.approx(-b.mapping[c], abs=1e-12)


def test_catboost_ordered_hand_sequence():
    oe = E.fit_catboost_ordered(np.array([0, 0, 0]), np.array([1, 0, 1]), m=1, permutation=np.arange(3))
    assert oe.values == pytest.approx([2 / 3, (1 + 2 / 3) / 2, (1 + 2 / 3) / 3], abs=1e-12)
    assert oe.values == pytest.approx([0.6667, 0.8333, 0.5556], abs=1e-4)
    # full-statistics M-estimate serves held-out rows
    assert oe.encoder.mapping[0] == pytest.approx((2 + 2 / 3) / 4)
    assert oe.encoder.fallback == pytest.approx(2 / 3)


def test_catboost_first_row_gets_prior():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 5, 50)
    y = rng.integers(0, 2, 50)
    oe = E.fit_catboost_ordered(x, y, m=2.5, seed=9)
    assert oe.values[oe.permutation[0]] == pytest.approx(y.mean())
    again = E.fit_catboost_ordered(x, y, m=2.5, seed=9)
    assert np.array_equal(oe.values, again.values)
    with pytest.raises(ConfigError):
        E.fit_catboost_ordered(x, y, m=-1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_ordered_prefix_counts_match_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    x = rng.integers(0, int(rng.integers(1, 8)), n)
    y = rng.integers(0, 2, n)
    m = float(rng.uniform(0, 5))
    perm = rng.permutation(n)
    oe = E.fit_catboost_ordered(x, y, m=m, permutation=perm)
    ref = naive_ordered(x.tolist(), y.tolist(), m, perm.tolist())
    assert np.allclose(oe.values, [r[0] for r in ref], rtol=0, atol=1e-12)


def test_leakage_validation_labels_do_not_matter():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 10, 300)
    y = (rng.random(300) < 0.2).astype(int)
    train = slice(0, 200)
    fits = []
    for trial in range(3):
        yy = y.copy()
        yy[200:] = rng.integers(0, 2, 100)  # garbage validation labels
        stats = E.compute_stats(x[train], yy[train])
        fits.append([E.fit_m_estimate(stats, 2), E.fit_woe(stats, 0.5), E.fit_target(stats)])
    assert fits[0] == fits[1] == fits[2]


def test_transform_lookup_fallback_and_permutation(stats4):
    enc = E.fit_m_estimate(stats4, 1)
    assert E.transform(enc, X4).tolist() == [0.625, 0.625, 0.625, 0.25]
    assert E.transform(enc, np.array([7, 9, 2])).tolist() == [0.5, 0.5, 0.5]
    rng = np.random.default_rng(1)
    col = rng.integers(0, 4, 30)
    perm = rng.permutation(30)
    assert np.array_equal(E.transform(enc, col)[perm], E.transform(enc, col[perm]))
    assert E.transform(enc, np.array([], dtype=int)).shape == (0,)


def test_transform_labels():
    enc = E.fit_m_estimate(E.compute_stats(X4, Y4), 1).with_labels(["A", "B"])
    assert E.transform_labels(enc, ["B", "Z", "A"]).tolist() == [0.25, 0.5, 0.625]


def _random_encoders(rng):
    x = rng.integers(0, 8, 120)
    y = (rng.random(120) < 0.3).astype(int)
    s = E.compute_stats(x, y)
    labels = [f"cat{i}\t\"é" for i in range(8)]
    return [
        E.fit_target(s, float(rng.uniform(0, 5)), float(rng.uniform(0.1, 5))).with_labels(labels),
        E.fit_m_estimate(s, float(rng.uniform(0, 5))),
        E.fit_james_stein(s),
        E.fit_pozzolo(s, "lambda2", 1e-9),
        E.fit_woe(s, float(rng.uniform(0.01, 2))).with_labels(labels),
        E.fit_catboost_ordered(x, y, 1.5, 3).encoder,
    ]


def test_save_load_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    for trial in range(20):
        for enc in _random_encoders(rng):
            path = tmp_path / "enc.txt"
            E.save_encoder(enc, path)
            back = E.load_encoder(path)
            assert back == enc
            for c, v in enc.mapping.items():
                assert np.float64(back.mapping[c]).tobytes() == np.float64(v).tobytes()


def test_load_rejects_bad_files(tmp_path):
    enc = E.fit_m_estimate(E.compute_stats(X4, Y4), 1)
    text = E.dumps_encoder(enc)
    with pytest.raises(FormatError):
        E.loads_encoder(text.replace("version: 1", "version: 2"))
    with pytest.raises(FormatError):
        E.loads_encoder(text.replace("categories: 2", "categories: 3"))
    with pytest.raises(FormatError):
        E.loads_encoder("garbage\n")
    with pytest.raises(FormatError):
        E.loads_encoder(text.replace("0x", "zz", 1))


def test_encoder_config_validation():
    with pytest.raises(ConfigError):
        E.EncoderConfig("one_hot")
    with pytest.raises(ConfigError):
        E.EncoderConfig("target", f=0)
    with pytest.raises(ConfigError):
        E.EncoderConfig("woe", gamma=-1)
    with pytest.raises(ConfigError):
        E.EncoderConfig("pozzolo", epsilon=0)


def test_fit_encoder_dispatch_matches_direct():
    rng = np.random.default_rng(8)
    x = rng.integers(0, 6, 80)
    y = rng.integers(0, 2, 80)
    enc, values = E.fit_encoder(E.EncoderConfig("m_estimate", m=3), x, y)
    ref = naive_m_estimate(x.tolist(), y.tolist(), 3)
    assert np.allclose(values, [ref[c][1] for c in x.tolist()], atol=1e-12)
    enc, values = E.fit_encoder(E.EncoderConfig("catboost_ordered", m=3, permutation_seed=4), x, y)
    assert np.array_equal(values, E.fit_catboost_ordered(x, y, 3, 4).values)
