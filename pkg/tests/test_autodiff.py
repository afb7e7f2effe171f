"""Reverse-mode engine: tape semantics, op gradients, op contracts."""

import numpy as np
import pytest

from jtav import autodiff as ad
from jtav.errors import ContractError, DimensionError
from jtav.gradcheck import check_gradients, numeric_grad, relative_error


def test_tensor_grad_allocation():
    t = ad.Tensor(np.ones((2, 3)), requires_grad=True)
    assert t.grad is not None and t.grad.shape == (2, 3)
    assert not np.any(t.grad)
    c = ad.Tensor(np.ones(3))
    assert c.grad is None
    assert not c.tracked


def test_ops_outside_tape_do_not_track():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    y = ad.add(x, x)
    assert not y.tracked


def test_backward_without_tape_raises():
    x = ad.Tensor([1.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(x)


def test_backward_rejects_nonscalar():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with ad.Tape():
        y = ad.add(x, x)
        with pytest.raises(ContractError):
            ad.backward(y)


def test_backward_rejects_untracked_loss():
    with ad.Tape():
        loss = ad.sum_all(ad.Tensor([1.0, 2.0]))
        with pytest.raises(ContractError):
            ad.backward(loss)


def test_grad_accumulates_across_backward_calls():
    x = ad.Tensor([3.0], requires_grad=True)
    with ad.Tape():
        loss = ad.sum_all(ad.mul(x, x))
        ad.backward(loss)
        ad.backward(loss)
    assert np.allclose(x.grad, 12.0)  # 2 * (2x)
    x.zero_grad()
    assert np.allclose(x.grad, 0.0)


def test_tape_entries_per_op():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with ad.Tape() as tape:
        y = ad.mul(ad.add(x, x), x)
    assert len(tape.entries) == 2
    assert y.tracked


def test_constant_branch_not_recorded():
    # ops on plain constants must not grow the tape
    c = ad.Tensor([1.0, 2.0])
    with ad.Tape() as tape:
        ad.add(c, c)
    assert len(tape.entries) == 0


def test_matmul_shape_mismatch():
    a = ad.Tensor(np.ones((2, 3)))
    b = ad.Tensor(np.ones((4, 2)))
    with pytest.raises(DimensionError):
        ad.matmul(a, b)


def test_mul_row_broadcast_values():
    x = ad.Tensor(np.arange(6.0).reshape(2, 3))
    r = ad.Tensor([1.0, 10.0, 100.0])
    out = ad.mul(x, r)
    assert np.allclose(out.data, x.data * r.data)


def test_binary_dim_mismatch():
    x = ad.Tensor(np.ones((2, 3)))
    y = ad.Tensor(np.ones((2, 4)))
    with pytest.raises(DimensionError):
        ad.add(x, y)


def test_apply_binary_mul_alias():
    x = ad.Tensor([2.0, 3.0])
    a = ad.apply_binary("mul", x, x)
    b = ad.apply_binary("mul_elementwise", x, x)
    assert np.allclose(a.data, b.data)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = ad.softmax(ad.Tensor(rng.normal(scale=5.0, size=17)))
        assert abs(v.data.sum() - 1.0) < 1e-12


def test_softmax_shift_invariance():
    x = np.array([1.0, 2.0, 3.0])
    a = ad.softmax(ad.Tensor(x)).data
    b = ad.softmax(ad.Tensor(x + 500.0)).data
    assert np.allclose(a, b)
    assert np.isfinite(b).all()


def test_concat_axis1_values():
    a = ad.Tensor(np.ones((2, 2)))
    b = ad.Tensor(np.zeros((2, 3)))
    out = ad.concat([a, b], axis=1)
    assert out.shape == (2, 5)
    assert np.allclose(out.data[:, :2], 1.0)


def test_embedding_lookup_rows():
    table = ad.Tensor(np.arange(12.0).reshape(4, 3))
    out = ad.embedding_lookup(table, [2, 0, 2])
    assert np.allclose(out.data, table.data[[2, 0, 2]])


def test_embedding_padding_row_grad_pinned():
    table = ad.Tensor(np.random.default_rng(0).normal(size=(4, 3)),
                      requires_grad=True)
    with ad.Tape():
        out = ad.embedding_lookup(table, [0, 1, 1])
        ad.backward(ad.sum_all(out))
    assert np.allclose(table.grad[0], 0.0)  # row 0 is padding
    assert np.allclose(table.grad[1], 2.0)


def test_conv2d_matches_direct_convolution():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 5, 7))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = ad.conv2d(ad.Tensor(x), ad.Tensor(k), ad.Tensor(b)).data
    # brute-force same-padded cross-correlation
    ref = np.zeros((3, 5, 7))
    for o in range(3):
        for i in range(5):
            for j in range(7):
                s = 0.0
                for c in range(2):
                    for a in range(3):
                        for bb in range(3):
                            ii, jj = i + a - 1, j + bb - 1
                            if 0 <= ii < 5 and 0 <= jj < 7:
                                s += x[c, ii, jj] * k[o, c, a, bb]
                ref[o, i, j] = s + b[o]
    assert np.allclose(out, ref)


def test_conv2d_rejects_even_kernel():
    x = ad.Tensor(np.ones((1, 4, 4)))
    k = ad.Tensor(np.ones((1, 1, 2, 2)))
    with pytest.raises(ContractError):
        ad.conv2d(x, k, ad.Tensor(np.zeros(1)))


def test_conv2d_leaf_input_grad_skipped():
    # constant image input: backward must not spend time on dx
    x = ad.Tensor(np.random.default_rng(0).normal(size=(1, 6, 6)))
    k = ad.Tensor(np.random.default_rng(1).normal(size=(2, 1, 3, 3)),
                  requires_grad=True)
    b = ad.Tensor(np.zeros(2), requires_grad=True)
    with ad.Tape():
        out = ad.conv2d(x, k, b)
        ad.backward(ad.sum_all(out))
    assert np.any(k.grad)
    assert np.any(b.grad)


def test_max_pool2d_values_and_ceil_mode():
    x = np.arange(24.0).reshape(1, 4, 6)
    out = ad.max_pool2d(ad.Tensor(x), (2, 2))
    assert out.shape == (1, 2, 3)
    assert np.allclose(out.data[0, 0], [7.0, 9.0, 11.0])
    # ragged edge: 5 columns with pool 2 -> ceil to 3 windows
    y = ad.max_pool2d(ad.Tensor(np.arange(10.0).reshape(1, 2, 5)), (2, 2))
    assert y.shape == (1, 1, 3)
    assert y.data[0, 0, 2] == 9.0


def test_max_pool2d_tie_routes_grad_to_first():
    x = ad.Tensor(np.zeros((1, 2, 2)), requires_grad=True)
    with ad.Tape():
        out = ad.max_pool2d(x, (2, 2))
        ad.backward(ad.sum_all(out))
    assert x.grad[0, 0, 0] == 1.0
    assert x.grad.sum() == 1.0


def test_batch_norm_train_standardizes():
    rng = np.random.default_rng(2)
    x = ad.Tensor(rng.normal(loc=3.0, scale=2.0, size=(4, 8, 9)))
    st = ad.BatchNormState(4)
    out = ad.batch_norm(x, ad.Tensor(np.ones(4)), ad.Tensor(np.zeros(4)),
                        st, "train")
    m = out.data.mean(axis=(1, 2))
    v = out.data.var(axis=(1, 2))
    assert np.allclose(m, 0.0, atol=1e-12)
    assert np.allclose(v, 1.0, atol=1e-3)  # eps shrinks variance slightly
    assert st.initialized


def test_batch_norm_running_stats_momentum():
    x1 = np.ones((1, 2, 2)) * 4.0
    x2 = np.zeros((1, 2, 2))
    st = ad.BatchNormState(1, momentum=0.5)
    g, b = ad.Tensor(np.ones(1)), ad.Tensor(np.zeros(1))
    ad.batch_norm(ad.Tensor(x1), g, b, st, "train")
    assert np.allclose(st.running_mean, 4.0)  # first batch seeds the stats
    ad.batch_norm(ad.Tensor(x2), g, b, st, "train")
    assert np.allclose(st.running_mean, 2.0)


def test_batch_norm_eval_uses_running_stats():
    st = ad.BatchNormState(1)
    st.running_mean = np.array([1.0])
    st.running_var = np.array([4.0])
    st.initialized = True
    x = ad.Tensor(np.full((1, 2, 2), 5.0))
    out = ad.batch_norm(x, ad.Tensor(np.ones(1)), ad.Tensor(np.zeros(1)),
                        st, "eval")
    assert np.allclose(out.data, (5.0 - 1.0) / np.sqrt(4.0 + st.eps))


def test_batch_norm_eval_uninitialized_raises():
    from jtav.errors import UninitializedStatsError
    st = ad.BatchNormState(1)
    with pytest.raises(UninitializedStatsError):
        ad.batch_norm(ad.Tensor(np.ones((1, 2, 2))), ad.Tensor(np.ones(1)),
                      ad.Tensor(np.zeros(1)), st, "eval")


def test_bce_loss_half_is_ln2():
    y = np.array([1.0, 0.0, 1.0])
    yhat = ad.Tensor(np.full(3, 0.5))
    loss = ad.bce_loss(y, yhat)
    assert abs(float(loss.data) - np.log(2.0)) < 1e-12


def test_bce_loss_clamps_extreme_probabilities():
    y = np.array([1.0])
    loss = ad.bce_loss(y, ad.Tensor(np.array([0.0])))
    assert np.isfinite(float(loss.data))


def test_gru_sequence_matches_manual_recurrence():
    rng = np.random.default_rng(3)
    T, D, H = 5, 4, 3
    x = rng.normal(size=(T, D))
    wx = rng.normal(size=(3 * H, D))
    b = rng.normal(size=3 * H)
    uzr = rng.normal(size=(2 * H, H))
    uc = rng.normal(size=(H, H))
    out = ad.gru_sequence(ad.Tensor(x), ad.Tensor(wx), ad.Tensor(b),
                          ad.Tensor(uzr), ad.Tensor(uc)).data

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = np.zeros(H)
    for t in range(T):
        pre = wx @ x[t] + b
        az = uzr @ h
        z = sig(pre[:H] + az[:H])
        r = sig(pre[H:2 * H] + az[H:])
        c = np.tanh(pre[2 * H:] + uc @ (r * h))
        h = (1.0 - z) * h + z * c
        assert np.allclose(out[t], h, atol=1e-12), "step %d diverged" % t


def test_gru_rejects_bad_weight_shapes():
    with pytest.raises(DimensionError):
        ad.gru_sequence(ad.Tensor(np.ones((4, 2))), ad.Tensor(np.ones((7, 2))),
                        ad.Tensor(np.ones(7)), ad.Tensor(np.ones((2, 1))),
                        ad.Tensor(np.ones((1, 1))))


# -- finite-difference spot checks (the exhaustive sweep lives in the
#    acceptance suite; these cover the trickiest closures directly) --------


def _fd_case(build, tensors, tol=1e-4):
    err, _ = check_gradients(build, tensors)
    assert err < tol, "rel err %.3e" % err


def test_grad_softmax_projection():
    rng = np.random.default_rng(10)
    x = ad.Tensor(rng.normal(size=7), requires_grad=True)
    w = ad.Tensor(rng.normal(size=7), requires_grad=True)
    _fd_case(lambda: ad.matmul(w, ad.softmax(x)), [x, w])


def test_grad_conv_pool_chain():
    rng = np.random.default_rng(11)
    x = ad.Tensor(rng.normal(size=(2, 6, 5)), requires_grad=True)
    k = ad.Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.4, requires_grad=True)
    b = ad.Tensor(rng.normal(size=3), requires_grad=True)
    _fd_case(lambda: ad.sum_all(ad.max_pool2d(ad.conv2d(x, k, b), (2, 2))),
             [x, k, b])


def test_grad_bce_through_sigmoid():
    rng = np.random.default_rng(12)
    z = ad.Tensor(rng.normal(size=4), requires_grad=True)
    y = np.array([1.0, 0.0, 0.0, 1.0])
    _fd_case(lambda: ad.bce_loss(y, ad.sigmoid(z)), [z])


def test_grad_gru_full_inputs():
    rng = np.random.default_rng(13)
    T, D, H = 4, 3, 2
    x = ad.Tensor(rng.normal(size=(T, D)), requires_grad=True)
    wx = ad.Tensor(rng.normal(size=(3 * H, D)) * 0.5, requires_grad=True)
    b = ad.Tensor(rng.normal(size=3 * H) * 0.3, requires_grad=True)
    uzr = ad.Tensor(rng.normal(size=(2 * H, H)) * 0.5, requires_grad=True)
    uc = ad.Tensor(rng.normal(size=(H, H)) * 0.5, requires_grad=True)
    proj = ad.Tensor(rng.normal(size=H), requires_grad=True)
    _fd_case(lambda: ad.matmul(proj, ad.mean_pool(
        ad.gru_sequence(x, wx, b, uzr, uc))), [x, wx, b, uzr, uc, proj])


def test_numeric_grad_harness_on_quadratic():
    # the FD harness itself against an analytic derivative
    x = ad.Tensor(np.array([2.0, -1.0, 0.5]))
    g = numeric_grad(lambda: float((x.data ** 3).sum()), [x])[0]
    assert np.allclose(g, 3.0 * x.data ** 2, atol=1e-6)


def test_relative_error_noise_floor():
    assert relative_error(np.zeros(3), np.full(3, 1e-10)) == 0.0
    assert relative_error(np.ones(3), 1.01 * np.ones(3)) > 1e-3
