"""Visual/text encoders and fusion: values, invariances, gradient paths."""

import numpy as np
import pytest

from akgp.encoders import (
    EncoderParams,
    encode_batch,
    encode_text,
    encode_visual,
    fuse_multimodal,
    token_bow_row,
)
from akgp.tensor import (
    Tape,
    Tensor,
    backward,
    fd_check,
    from_array,
    mul,
    sum_all,
    uniform,
    xavier,
    zeros,
)


def make_params(d_i=3, d_t=4, d_m=3, vocab=6, seed=0):
    return EncoderParams(
        w_visual=xavier([d_i, d_m], seed),
        b_visual=zeros([d_m]),
        token_table=xavier([vocab, d_t], seed + 1),
        w_text=xavier([d_t, d_m], seed + 2),
        b_text=zeros([d_m]),
        w_fusion=xavier([2 * d_m, d_m], seed + 3),
        b_fusion=zeros([d_m]),
    )


def test_visual_zero_input_zero_bias():
    p = make_params()
    out = encode_visual(zeros([3]), p)
    assert np.allclose(out.data, 0.0)


def test_visual_identity_weights_analytic():
    p = make_params(d_i=2, d_m=2)
    p.w_visual = from_array(np.eye(2))
    out = encode_visual(from_array([0.5, -0.5]), p)
    assert np.allclose(out.data, [np.tanh(0.5), np.tanh(-0.5)])


def test_visual_gradient_passes_fd():
    p = make_params()
    image = uniform([3], -1, 1, 4)

    def f(w):
        probe = make_params()
        probe.w_visual = w
        out = encode_visual(image, probe)
        return sum_all(mul(out, out))

    assert fd_check(f, Tensor(p.w_visual.data.copy())).passed


def test_text_repeated_token_equals_single():
    p = make_params()
    a = encode_text([5, 5, 5], p)
    b = encode_text([5], p)
    assert np.allclose(a.data, b.data)


def test_text_order_invariant():
    p = make_params()
    a = encode_text([1, 2, 3], p)
    b = encode_text([3, 1, 2], p)
    assert np.array_equal(a.data, b.data)


def test_text_duplication_invariant():
    p = make_params()
    a = encode_text([1, 4, 2], p)
    b = encode_text([1, 4, 2, 1, 4, 2], p)
    assert np.allclose(a.data, b.data)


def test_text_unused_embedding_rows_get_zero_grad():
    p = make_params()
    p.token_table.requires_grad_(True)
    with Tape() as tape:
        out = encode_text([1, 3], p)
        loss = sum_all(mul(out, out))
    backward(loss, tape)
    grad = p.token_table.grad
    for row in (0, 2, 4, 5):
        assert np.array_equal(grad[row], np.zeros(4))
    assert np.any(grad[1] != 0) and np.any(grad[3] != 0)


def test_text_rejects_bad_tokens():
    p = make_params()
    with pytest.raises(ValueError):
        encode_text([], p)
    with pytest.raises(IndexError):
        encode_text([99], p)


def test_fusion_zero_inputs():
    p = make_params()
    out = fuse_multimodal(zeros([3]), zeros([3]), p)
    assert np.allclose(out.data, 0.0)


def test_fusion_block_weights_isolate_one_input():
    p = make_params(d_m=3)
    w = np.zeros((6, 3))
    w[:3, :] = np.eye(3)  # only the visual half feeds through
    p.w_fusion = from_array(w)
    v = uniform([3], -1, 1, 7)
    out1 = fuse_multimodal(v, uniform([3], -1, 1, 8), p)
    out2 = fuse_multimodal(v, uniform([3], -1, 1, 9), p)
    assert np.allclose(out1.data, np.tanh(v.data))
    assert np.array_equal(out1.data, out2.data)


def test_outputs_bounded_by_tanh():
    p = make_params()
    image = uniform([3], -50, 50, 10)
    out = fuse_multimodal(encode_visual(image, p), encode_text([0, 1], p), p)
    assert np.all(np.abs(out.data) < 1.0)


def test_full_path_passes_fd_for_each_group():
    image = uniform([3], -1, 1, 11)
    tokens = [0, 2, 5]

    def pipeline(params):
        v = encode_visual(image, params)
        t = encode_text(tokens, params)
        out = fuse_multimodal(v, t, params)
        return sum_all(mul(out, out))

    base = make_params(seed=20)
    for attr in ("w_visual", "token_table", "w_text", "w_fusion", "b_fusion"):
        def f(x, _attr=attr):
            probe = make_params(seed=20)
            setattr(probe, _attr, x)
            return pipeline(probe)

        report = fd_check(f, Tensor(getattr(base, attr).data.copy()))
        assert report.passed, f"{attr}: {report}"


def test_batch_matches_single_example_path():
    p = make_params()
    images = uniform([4, 3], -1, 1, 30)
    token_lists = [[0, 1], [2, 2, 3], [5], [4, 0, 1]]
    bow = np.stack([token_bow_row(toks, 6) for toks in token_lists])
    batched = encode_batch(Tensor(images.data), Tensor(bow), p)
    for row, toks in enumerate(token_lists):
        single = fuse_multimodal(
            encode_visual(from_array(images.data[row]), p), encode_text(toks, p), p)
        assert np.allclose(batched.data[row], single.data, atol=1e-12)
