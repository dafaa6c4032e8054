import numpy as np
import pytest

from structmem import concat_kv_attention, dual_cross_attention, scaled_dot_attention
from structmem.errors import ShapeMismatchError


def softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mixture_oracle(q, k_m, v_m, k_r, v_r):
    """Per-row lambda mixture from raw exponential sums with a shared shift."""
    d = q.shape[1]
    logits_m = q @ k_m.T / np.sqrt(d)
    logits_r = q @ k_r.T / np.sqrt(d)
    out = np.empty((q.shape[0], v_m.shape[1]))
    for i in range(q.shape[0]):
        shift = max(logits_m[i].max(), logits_r[i].max())
        zm = np.exp(logits_m[i] - shift).sum()
        zr = np.exp(logits_r[i] - shift).sum()
        lam = zm / (zm + zr)
        am = softmax_rows(logits_m[i : i + 1]) @ v_m
        ar = softmax_rows(logits_r[i : i + 1]) @ v_r
        out[i] = lam * am[0] + (1 - lam) * ar[0]
    return out


class TestScaledDotAttention:
    def test_single_key_returns_value(self, rng):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((1, 4))
        v = rng.standard_normal((1, 6))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out, np.tile(v, (3, 1)))

    def test_identical_keys_average_values(self, rng):
        q = rng.standard_normal((2, 4))
        k = np.tile(rng.standard_normal(4), (5, 1))
        v = rng.standard_normal((5, 3))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out, np.tile(v.mean(axis=0), (2, 1)))

    def test_softmax_rows_sum_to_one(self, rng):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((5, 4))
        logits = q @ k.T / 2.0
        assert np.max(np.abs(softmax_rows(logits).sum(axis=1) - 1.0)) <= 1e-12
        # and the kernel agrees with the explicit softmax formulation
        v = rng.standard_normal((5, 2))
        assert np.allclose(scaled_dot_attention(q, k, v), softmax_rows(logits) @ v, atol=1e-12)

    def test_kv_pair_permutation_invariance(self, rng):
        q = rng.standard_normal((4, 8))
        k = rng.standard_normal((7, 8))
        v = rng.standard_normal((7, 5))
        perm = rng.permutation(7)
        a = scaled_dot_attention(q, k, v)
        b = scaled_dot_attention(q, k[perm], v[perm])
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            scaled_dot_attention(
                rng.standard_normal((2, 3)),
                rng.standard_normal((4, 5)),
                rng.standard_normal((4, 2)),
            )


class TestConcatKvAttention:
    def test_empty_reference_reduces(self, rng):
        q = rng.standard_normal((2, 4))
        k = rng.standard_normal((5, 4))
        v = rng.standard_normal((5, 3))
        out = concat_kv_attention(q, k, v, np.empty((0, 4)), np.empty((0, 3)))
        assert np.array_equal(out, scaled_dot_attention(q, k, v))

    def test_duplicated_source_unchanged(self, rng):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((4, 4))
        v = rng.standard_normal((4, 5))
        out = concat_kv_attention(q, k, v, k, v)
        assert np.allclose(out, scaled_dot_attention(q, k, v), atol=1e-12)

    def test_mixture_identity(self, rng):
        q = rng.standard_normal((2, 8))
        k_m = rng.standard_normal((4, 8))
        v_m = rng.standard_normal((4, 3))
        k_r = rng.standard_normal((3, 8))
        v_r = rng.standard_normal((3, 3))
        got = concat_kv_attention(q, k_m, v_m, k_r, v_r)
        assert np.max(np.abs(got - mixture_oracle(q, k_m, v_m, k_r, v_r))) <= 1e-9

    def test_mixture_identity_many_instances(self, rng):
        for _ in range(100):
            lq, lm, lr = rng.integers(1, 6, size=3)
            d, dv = int(rng.integers(2, 9)), int(rng.integers(1, 5))
            q = rng.standard_normal((lq, d))
            k_m, v_m = rng.standard_normal((lm, d)), rng.standard_normal((lm, dv))
            k_r, v_r = rng.standard_normal((lr, d)), rng.standard_normal((lr, dv))
            got = concat_kv_attention(q, k_m, v_m, k_r, v_r)
            assert np.max(np.abs(got - mixture_oracle(q, k_m, v_m, k_r, v_r))) <= 1e-9


class TestDualCrossAttention:
    def test_zero_embedding_branch(self, rng):
        q = rng.standard_normal((3, 4))
        k_t, v_t = rng.standard_normal((5, 4)), rng.standard_normal((5, 2))
        k_e, v_e = rng.standard_normal((4, 4)), np.zeros((4, 2))
        out = dual_cross_attention(q, k_t, v_t, k_e, v_e)
        assert np.allclose(out, scaled_dot_attention(q, k_t, v_t), atol=1e-12)

    def test_identical_branches_double(self, rng):
        q = rng.standard_normal((2, 4))
        k, v = rng.standard_normal((3, 4)), rng.standard_normal((3, 2))
        out = dual_cross_attention(q, k, v, k, v)
        assert np.allclose(out, 2 * scaled_dot_attention(q, k, v), atol=1e-12)

    def test_definitional_sum(self, rng):
        q = rng.standard_normal((2, 6))
        k_t, v_t = rng.standard_normal((4, 6)), rng.standard_normal((4, 3))
        k_e, v_e = rng.standard_normal((5, 6)), rng.standard_normal((5, 3))
        out = dual_cross_attention(q, k_t, v_t, k_e, v_e)
        diff = out - scaled_dot_attention(q, k_t, v_t) - scaled_dot_attention(q, k_e, v_e)
        assert np.max(np.abs(diff)) <= 1e-12

    def test_sum_differs_from_mixture(self):
        rng = np.random.default_rng(7)
        q = rng.standard_normal((3, 8))
        k_m, v_m = rng.standard_normal((4, 8)), rng.standard_normal((4, 3))
        k_r, v_r = rng.standard_normal((3, 8)), rng.standard_normal((3, 3))
        summed = dual_cross_attention(q, k_m, v_m, k_r, v_r)
        mixed = concat_kv_attention(q, k_m, v_m, k_r, v_r)
        assert np.max(np.abs(summed - mixed)) > 1e-3
