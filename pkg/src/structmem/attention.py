"""Reference attention kernels for the two conditioning fusion semantics:
a single softmax over concatenated key/value sources (a normalized mixture)
versus a sum of two independently normalized cross-attentions.

Plain dense float64, no batching or heads: correctness oracles, not
performance kernels.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError


def _check_operands(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> None:
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatchError("q, k, v must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError(f"q dim {q.shape[1]} != k dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeMismatchError(f"k rows {k.shape[0]} != v rows {v.shape[0]}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
        raise ShapeMismatchError("operands must be finite")


def scaled_dot_attention(q, k, v) -> np.ndarray:
    """softmax(q k^T / sqrt(d)) v with max-shifted exponentials."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_operands(q, k, v)
    if k.shape[0] == 0:
        raise ShapeMismatchError("need at least one key")
    logits = q @ k.T / np.sqrt(q.shape[1])
    shifted = logits - logits.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def concat_kv_attention(q, k_m, v_m, k_r, v_r) -> np.ndarray:
    """Single softmax over keys/values from two sources concatenated along
    the sequence axis. Either source may be empty."""
    k_m = np.asarray(k_m, dtype=np.float64)
    v_m = np.asarray(v_m, dtype=np.float64)
    k_r = np.asarray(k_r, dtype=np.float64)
    v_r = np.asarray(v_r, dtype=np.float64)
    if k_m.shape[0] == 0:
        return scaled_dot_attention(q, k_r, v_r)
    if k_r.shape[0] == 0:
        return scaled_dot_attention(q, k_m, v_m)
    if k_m.shape[1] != k_r.shape[1] or v_m.shape[1] != v_r.shape[1]:
        raise ShapeMismatchError("source key/value dims differ")
    return scaled_dot_attention(
        q, np.concatenate([k_m, k_r], axis=0), np.concatenate([v_m, v_r], axis=0)
    )


def dual_cross_attention(q, k_text, v_text, k_emb, v_emb) -> np.ndarray:
    """Sum of two independently normalized attentions.

    Unlike concat_kv_attention this is NOT a mixture: each branch's softmax
    normalizes on its own, and the results are added.
    """
    return scaled_dot_attention(q, k_text, v_text) + scaled_dot_attention(q, k_emb, v_emb)
