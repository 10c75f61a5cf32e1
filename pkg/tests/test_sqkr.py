import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_trilemma.frames import DEFAULT_LEVEL, build_frame, kashin_decompose, synthesize
from ldp_trilemma.harness.data import gen_atom_source, gen_mean_data
from ldp_trilemma.privacy import RRParams, SharedRandomness, rr_transition_matrix
from ldp_trilemma.sqkr import (
    SqkrBatch,
    SqkrMessage,
    SqkrParams,
    _unpack_signs,
    sqkr_coefficient_sum,
    sqkr_decode,
    sqkr_encode,
    sqkr_group_decode,
    sqkr_group_encode,
    sqkr_quantize,
    sqkr_statistical,
)

LN3 = math.log(3)
# per-client MSE constant, frozen: per-client MSE <= K0^2 * debias^2 * d / k
MSE_CONST = DEFAULT_LEVEL**2


def params(d, eps, b, mode="public_coin", seed=0):
    return SqkrParams(eps, b, build_frame(d, seed), mode)


def exact_expectation(x, p: SqkrParams) -> np.ndarray:
    """Probability-weighted decoder output over every index tuple, quantiser
    outcome on the sampled coordinates and RR output."""
    a = kashin_decompose(p.frame, x, level=p.level).a
    bound, k, N = p.bound, p.k, p.N
    p_plus = (a + bound) / (2 * bound)
    Q = rr_transition_matrix(RRParams(p.epsilon, k))
    total = np.zeros(p.d)
    for idx in itertools.product(range(N), repeat=k):
        distinct = sorted(set(idx))
        for signs in itertools.product((0, 1), repeat=len(distinct)):
            sign_of = dict(zip(distinct, signs))
            w_q = np.prod([p_plus[j] if sign_of[j] else 1 - p_plus[j] for j in distinct])
            v = sum(sign_of[s] << (k - 1 - m) for m, s in enumerate(idx))
            for y in range(1 << k):
                w = N**-k * w_q * Q[v, y]
                est = synthesize(p.frame, sqkr_coefficient_sum([y], [idx], p))
                total += w * est
    return total


def per_client_estimates(batch: SqkrBatch, indices, p: SqkrParams) -> np.ndarray:
    n = len(batch)
    signs = _unpack_signs(batch.values, p.k)
    A = np.zeros((n, p.N))
    np.add.at(A, (np.repeat(np.arange(n), p.k), np.asarray(indices).ravel()), signs.ravel())
    return synthesize(p.frame, A * (p.N / p.k) * p.rr.debias * p.bound)


class TestParams:
    def test_k_examples(self):
        assert params(4, 1.0, 1).k == 1
        assert params(4, 5.0, 3).k == 3
        assert params(4, 0.3, 4).k == 1
        assert params(4, 2.5, 8).k == 3

    def test_grouping_sizes(self):
        p = params(64, 1.0, 1, "statistical_grouping")
        assert p.b_star == 1 and p.groups == 128
        p = params(64, 1.0, 4, "statistical_grouping")
        assert p.b_star == 2 and p.groups == 64
        p = params(5, 2.0, 3, "statistical_grouping")  # N = 16, b* = 3 -> 6 groups, last one padded
        assert p.b_star == 3 and p.groups == 6

    def test_bound_relation(self):
        p = params(10, 1.0, 1)
        # c / sqrt(d) must equal the Kashin bound K0 / sqrt(N), so c = K0 sqrt(d / N)
        c = p.level * math.sqrt(p.d / p.N)
        assert p.bound == pytest.approx(c / math.sqrt(p.d))
        assert p.bound == pytest.approx(p.level / math.sqrt(p.N))

    def test_errors(self):
        f = build_frame(4, 0)
        with pytest.raises(ValueError):
            SqkrParams(0.0, 1, f)
        with pytest.raises(ValueError):
            SqkrParams(1.0, 0, f)
        with pytest.raises(ValueError):
            SqkrParams(1.0, 1, f, "bogus")

    def test_accounting(self):
        p = params(64, 5.0, 3)
        assert p.shared_bits == 3 * 7 and p.payload_bits == 3 and p.budget == 3
        q = params(64, 5.0, 3, "private_coin")
        assert q.shared_bits == 0 and q.payload_bits == 3 + 3 * 7 and q.budget == 3 * 8


class TestQuantize:
    def test_boundary(self, rng):
        q = sqkr_quantize(np.full(1000, 0.5), 0.5, rng)
        assert (q == 0.5).all()

    def test_probabilities(self, rng):
        n = 200_000
        assert abs((sqkr_quantize(np.zeros(n), 1.0, rng) > 0).mean() - 0.5) < 0.005
        # a = c / (2 sqrt d) -> P(+) = 3/4
        assert abs((sqkr_quantize(np.full(n, 0.5), 1.0, rng) > 0).mean() - 0.75) < 0.005

    def test_unbiased(self, rng):
        a = rng.uniform(-1, 1, size=8)
        q = sqkr_quantize(np.tile(a, (100_000, 1)), 1.0, rng)
        np.testing.assert_allclose(q.mean(axis=0), a, atol=0.015)

    def test_range_violation(self, rng):
        with pytest.raises(ValueError):
            sqkr_quantize(np.array([1.1]), 1.0, rng)


class TestExactUnbiasedness:
    @pytest.mark.parametrize("x", [[0.6, -0.8], [1.0, 0.0], [0.0, 0.0], [-0.3, 0.2]])
    def test_d2_k1(self, x):
        p = params(2, LN3, 1)
        assert p.N == 4 and p.k == 1
        np.testing.assert_allclose(exact_expectation(np.array(x), p), x, atol=1e-9)

    @pytest.mark.parametrize("d", [3, 4])
    def test_k2(self, d, rng):
        p = params(d, 1.7, 2, seed=3)
        assert p.N == 8 and p.k == 2
        x = rng.standard_normal(d)
        x *= 0.9 / np.linalg.norm(x)
        np.testing.assert_allclose(exact_expectation(x, p), x, atol=1e-9)


class TestEncodeDecode:
    def test_payload_length(self, rng):
        p = params(16, 5.0, 3)
        X = gen_mean_data(16, 1000, 0)
        batch = sqkr_encode(X, p, SharedRandomness(1, np.arange(1000)), rng)
        assert batch.k == 3 and (batch.values < 8).all() and (batch.values >= 0).all()
        for i in (0, 500, 999):
            m = batch[i]
            assert m.k == 3 and m.indices is None

    def test_norm_check(self, rng):
        p = params(4, 1.0, 1)
        with pytest.raises(ValueError):
            sqkr_encode(np.array([1.0, 1e-4, 0, 0]), p, SharedRandomness(0), rng)
        sqkr_encode(np.array([1.0 + 1e-10, 0, 0, 0]), p, SharedRandomness(0), rng)

    def test_single_vector(self, rng):
        p = params(4, 1.0, 1)
        batch = sqkr_encode(np.array([0.5, 0.5, 0.5, 0.5]), p, SharedRandomness(3, 7), rng)
        assert len(batch) == 1 and batch.client_ids[0] == 7
        est = sqkr_decode(batch, p, SharedRandomness(3, np.array([7])))
        assert est.shape == (4,)

    def test_shared_stream_cost(self, rng):
        p = params(64, 2.0, 4)
        s = SharedRandomness(0, np.arange(10))
        sqkr_encode(gen_mean_data(64, 10, 1), p, s, rng)
        assert s.bits_consumed == p.k * math.ceil(math.log2(p.N))

    def test_origin_unbiased(self, rng):
        p = params(8, 1.0, 1)
        n = 10_000
        s = SharedRandomness(4, np.arange(n))
        batch = sqkr_encode(np.zeros((n, 8)), p, s, rng)
        idx = np.column_stack([s.replay().draw(p.N) for _ in range(p.k)])
        est = per_client_estimates(batch, idx, p)
        mean, se = est.mean(axis=0), est.std(axis=0, ddof=1) / math.sqrt(n)
        assert (np.abs(mean) <= 5 * se).all()
        np.testing.assert_allclose(sqkr_decode(batch, p, s.replay()), mean, atol=1e-12)

    @pytest.mark.parametrize("eps,b", [(1.0, 1), (5.0, 3), (0.5, 2)])
    def test_per_client_mse_bound(self, eps, b, rng):
        d, trials = 16, 1000
        p = params(d, eps, b, seed=2)
        X = gen_mean_data(d, trials, 5)
        s = SharedRandomness(8, np.arange(trials))
        batch = sqkr_encode(X, p, s, rng)
        idx = np.column_stack([s.replay().draw(p.N) for _ in range(p.k)])
        mse = ((per_client_estimates(batch, idx, p) - X) ** 2).sum(axis=1).mean()
        bound = MSE_CONST * p.rr.debias**2 * d / p.k
        assert mse <= 1.5 * bound

    def test_public_private_identical(self, rng):
        # the same stream used as private coin reproduces the public estimate
        X = gen_mean_data(32, 500, 3)
        pub, prv = params(32, 3.0, 2), params(32, 3.0, 2, "private_coin")
        ids = np.arange(500)
        b1 = sqkr_encode(X, pub, SharedRandomness(6, ids), np.random.default_rng(1))
        b2 = sqkr_encode(X, prv, SharedRandomness(6, ids), np.random.default_rng(1))
        np.testing.assert_array_equal(b1.values, b2.values)
        np.testing.assert_array_equal(
            sqkr_decode(b1, pub, SharedRandomness(6, ids)), sqkr_decode(b2, prv)
        )

    def test_private_desync(self, rng):
        p = params(8, 1.0, 1, "private_coin")
        batch = sqkr_encode(gen_mean_data(8, 5, 0), p, SharedRandomness(0, np.arange(5)), rng)
        batch.indices = None
        with pytest.raises(ValueError, match="desync"):
            sqkr_decode(batch, p)

    def test_decode_mismatch(self, rng):
        p = params(8, 1.0, 1)
        batch = sqkr_encode(gen_mean_data(8, 5, 0), p, SharedRandomness(0, np.arange(5)), rng)
        with pytest.raises(ValueError):
            sqkr_decode(batch, params(8, 3.0, 2), SharedRandomness(0, np.arange(5)))
        with pytest.raises(ValueError):
            sqkr_decode(batch, p)

    def test_coefficient_sum_index_check(self):
        p = params(2, 1.0, 1)
        with pytest.raises(ValueError):
            sqkr_coefficient_sum([1], [[4]], p)

    def test_public_coin_rate(self, rng):
        d, n = 64, 100_000
        p = params(d, 1.0, 1)
        X = gen_mean_data(d, n, 0)
        s = SharedRandomness(0, np.arange(n))
        est = sqkr_decode(sqkr_encode(X, p, s, rng), p, s.replay())
        err = ((est - X.mean(axis=0)) ** 2).sum()
        c_rate = 1.5 * MSE_CONST * p.rr.debias**2  # per-client bound at k = 1, eps = 1
        assert err <= c_rate * d / (n * min(1.0, 1.0, 1))


class TestWireFormat:
    def test_public_layout(self):
        m = SqkrMessage("public_coin", 3, 0b101)
        assert m.to_bytes() == bytes([0, 3, 0b10100000])

    def test_private_layout(self):
        m = SqkrMessage("private_coin", 2, 0b10, (5, 300))
        data = m.to_bytes(index_bits=9)
        assert data == bytes([1, 2, 0b10000000]) + (5).to_bytes(2, "little") + (300).to_bytes(2, "little")
        assert SqkrMessage.from_bytes(data, 9) == m

    def test_index_overflow(self):
        with pytest.raises(ValueError):
            SqkrMessage("private_coin", 1, 1, (8,)).to_bytes(index_bits=3)

    def test_bad_index_section(self):
        with pytest.raises(ValueError):
            SqkrMessage.from_bytes(bytes([1, 1, 0x80, 1]), 9)

    @given(st.sampled_from(["public_coin", "private_coin", "statistical_grouping"]),
           st.integers(1, 8), st.integers(1, 16), st.data())
    def test_roundtrip(self, mode, k, index_bits, data):
        value = data.draw(st.integers(0, (1 << k) - 1))
        idx = None
        if mode == "private_coin":
            idx = tuple(data.draw(st.lists(st.integers(0, (1 << index_bits) - 1), min_size=k, max_size=k)))
        m = SqkrMessage(mode, k, value, idx)
        assert SqkrMessage.from_bytes(m.to_bytes(index_bits), index_bits) == m

    def test_batch_from_messages(self, rng):
        p = params(8, 2.0, 2, "private_coin")
        batch = sqkr_encode(gen_mean_data(8, 6, 0), p, SharedRandomness(0, np.arange(6)), rng)
        again = SqkrBatch.from_messages([batch[i] for i in range(6)], batch.client_ids)
        np.testing.assert_array_equal(again.values, batch.values)
        np.testing.assert_array_equal(again.indices, batch.indices)


class TestStatisticalGrouping:
    def test_drops_remainder(self, rng):
        p = params(8, 1.0, 1, "statistical_grouping")  # 16 groups
        X = gen_mean_data(8, 50, 0)
        msgs = sqkr_group_encode(X, p, rng)
        assert len(msgs) == 48
        est, n_eff = sqkr_statistical(X, p, rng)
        assert n_eff == 48 and est.shape == (8,)

    def test_too_few_clients(self, rng):
        p = params(8, 1.0, 1, "statistical_grouping")
        with pytest.raises(ValueError):
            sqkr_group_encode(gen_mean_data(8, 15, 0), p, rng)

    def test_point_mass_unbiased(self, rng):
        d = 8
        p = params(d, 2.0, 2, "statistical_grouping")
        x0 = gen_mean_data(d, 1, 9)[0]
        ests = np.array([sqkr_statistical(np.tile(x0, (p.groups * 50, 1)), p, rng)[0] for _ in range(200)])
        mean, se = ests.mean(axis=0), ests.std(axis=0, ddof=1) / math.sqrt(len(ests))
        assert (np.abs(mean - x0) <= 5 * se).all()

    def test_exact_expectation_point_mass(self):
        # each block is quantised then RR'd independently; the decoder is
        # linear, so E[estimate] follows from per-coordinate expectations
        p = params(3, 1.0, 2, "statistical_grouping")
        x0 = np.array([0.2, -0.5, 0.4])
        a = kashin_decompose(p.frame, x0).a
        m, bs = p.groups, p.b_star
        Q = rr_transition_matrix(p.rr)
        A_pad = np.zeros(m * bs)
        A_pad[: p.N] = a
        p_plus = (A_pad + p.bound) / (2 * p.bound)
        expected = np.zeros(m * bs)
        for g in range(m):
            coords = g * bs + np.arange(bs)
            for bits in itertools.product((0, 1), repeat=bs):
                w_q = np.prod([p_plus[c] if bt else 1 - p_plus[c] for c, bt in zip(coords, bits)])
                v = sum(bt << (bs - 1 - j) for j, bt in enumerate(bits))
                for y in range(1 << bs):
                    signs = np.array([2 * ((y >> (bs - 1 - j)) & 1) - 1 for j in range(bs)])
                    expected[coords] += w_q * Q[v, y] * signs * p.rr.debias * p.bound
        np.testing.assert_allclose(synthesize(p.frame, expected[: p.N]), x0, atol=1e-9)
        # and the decoder agrees with that algebra on a full deterministic message set
        values = np.arange(m) % (1 << bs)
        batch = SqkrBatch("statistical_grouping", bs, values, np.arange(m))
        manual = np.zeros(m * bs)
        for g, y in enumerate(values):
            manual[g * bs : (g + 1) * bs] = [2 * ((y >> (bs - 1 - j)) & 1) - 1 for j in range(bs)]
        np.testing.assert_allclose(
            sqkr_group_decode(batch, p),
            synthesize(p.frame, manual[: p.N] * p.rr.debias * p.bound),
            atol=1e-12,
        )

    def test_grouping_rate(self, rng):
        d, n = 64, 100_000
        p = params(d, 1.0, 1, "statistical_grouping")
        pop = gen_atom_source(d, 16, seed=1)
        est, n_eff = sqkr_statistical(pop.sample(n, rng), p, rng)
        err = ((est - pop.mean) ** 2).sum()
        c_rate = 1.5 * MSE_CONST * p.rr.debias**2
        assert err <= c_rate * d / (n_eff * min(1.0, 1.0, 1, d))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 20), st.floats(0.2, 6.0), st.integers(1, 6))
    def test_message_width(self, d, eps, b):
        p = params(d, eps, b, "statistical_grouping")
        rng = np.random.default_rng(0)
        msgs = sqkr_group_encode(gen_mean_data(d, p.groups * 2, 1), p, rng)
        assert msgs.k == p.b_star <= b
        assert (msgs.values < (1 << p.b_star)).all()
