import json

import numpy as np
import pytest

from foldalign import autodiff as ad
from foldalign.autodiff import NonFiniteError, ParamStore, Tensor

from conftest import composite_instance, finite_difference, param_fd_error, rel_err


def leaf(x):
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


class TestOps:
    def test_relu(self):
        x = leaf([-1.0, 0.0, 2.0])
        y = ad.relu(x)
        assert y.data.tolist() == [0.0, 0.0, 2.0]
        ad.backward(ad.sum_all(y))
        assert x.grad.tolist() == [0.0, 0.0, 1.0]

    def test_global_max_pool(self):
        x = leaf([[1.0, 5.0], [3.0, 2.0]])
        y = ad.global_max_pool(x)
        assert y.data.tolist() == [[3.0, 5.0]]
        ad.backward(ad.sum_all(y))
        assert x.grad.tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_max_pool_tie_goes_to_first_row(self):
        x = leaf([[2.0], [2.0], [1.0]])
        ad.backward(ad.sum_all(ad.global_max_pool(x)))
        assert x.grad.ravel().tolist() == [1.0, 0.0, 0.0]

    def test_mse(self):
        assert ad.mse(leaf([1.0, 2.0]), [1.0, 4.0]).item() == 2.0

    def test_mse_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.mse(leaf([1.0, 2.0]), [1.0])

    def test_sum_gradient_is_one(self, rng):
        x = leaf(rng.normal(size=(4, 5)))
        ad.backward(ad.sum_all(x))
        assert np.array_equal(x.grad, np.ones((4, 5)))

    def test_reduce_max_rows_routes_to_argmax(self):
        x = leaf([[1.0, 9.0], [4.0, 0.0], [2.0, 3.0]])
        groups = np.array([[0, 1], [1, 2], [2, 0]])
        y = ad.reduce_max_rows(x, groups)
        assert y.data.tolist() == [[4.0, 9.0], [4.0, 3.0], [2.0, 9.0]]
        ad.backward(ad.sum_all(y))
        assert x.grad.tolist() == [[0.0, 2.0], [2.0, 0.0], [1.0, 1.0]]

    def test_reduce_max_rows_perturbation(self, rng):
        # a small bump on a non-argmax entry leaves the output unchanged
        x = rng.normal(size=(8, 3))
        groups = np.array([rng.choice(8, 3, replace=False) for _ in range(8)])
        t = leaf(x)
        ad.backward(ad.sum_all(ad.reduce_max_rows(t, groups)))
        base = ad.reduce_max_rows(Tensor(x), groups).data.sum()
        for i in range(8):
            for j in range(3):
                bumped = x.copy()
                bumped[i, j] += 1e-7
                delta = (ad.reduce_max_rows(Tensor(bumped), groups).data.sum() - base) / 1e-7
                assert abs(delta - t.grad[i, j]) < 1e-5

    def test_broadcast_add_and_concat(self, rng):
        a, b = leaf(rng.normal(size=(3, 2))), leaf(rng.normal(size=(1, 2)))
        c = leaf(rng.normal(size=(3, 4)))
        out = ad.concat_lastdim([ad.add(a, b), c])
        assert np.array_equal(out.data, np.concatenate([a.data + b.data, c.data], axis=1))
        ad.backward(ad.sum_all(ad.scale(out, 2.0)))
        assert np.array_equal(b.grad, np.full((1, 2), 6.0))
        assert np.array_equal(c.grad, np.full((3, 4), 2.0))

    def test_nonfinite_raises(self):
        with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
            ad.scale(leaf([1e308]), 10.0)

    def test_shared_subexpression_accumulates(self):
        x = leaf([3.0])
        y = ad.add(x, x)
        ad.backward(ad.sum_all(ad.add(y, x)))
        assert x.grad.tolist() == [3.0]

    def test_linear_mse_fd(self, rng):
        X = rng.normal(size=(4, 3))
        W0, b0 = rng.normal(size=(3, 2)), rng.normal(size=(1, 2))
        y = rng.normal(size=(4, 2))
        W, b = leaf(W0), leaf(b0)
        ad.backward(ad.mse(ad.linear(Tensor(X), W, b), y))
        fd_w = finite_difference(lambda w: ad.mse(ad.linear(Tensor(X), Tensor(w), Tensor(b0)), y).item(), W0)
        fd_b = finite_difference(lambda v: ad.mse(ad.linear(Tensor(X), Tensor(W0), Tensor(v)), y).item(), b0)
        assert rel_err(W.grad, fd_w) < 1e-5
        assert rel_err(b.grad, fd_b) < 1e-5

    def test_mcd_loss_node(self, rng):
        target = rng.normal(size=(9, 3))
        r0 = rng.normal(size=(7, 3))
        r = leaf(r0)
        ad.backward(ad.mcd_loss(r, target, 2))
        from foldalign.metrics import grad_wrt_out

        assert np.array_equal(r.grad, grad_wrt_out(target, r0, 2))


def test_backward_bit_identical_and_inputs_untouched():
    from foldalign import foldnet as fn

    from conftest import tiny_specs

    enc, dec = tiny_specs()
    rng = np.random.default_rng(0)
    pts = fn.canonical_order(rng.normal(size=(20, 3)))
    template = fn.build_template(dec).points
    frozen_pts, frozen_template = pts.copy(), template.copy()
    params = fn.init_autoencoder(enc, dec, 0)
    before = {n: t.data.copy() for n, t in params.items()}
    grads = []
    for _ in range(2):
        params.zero_grad()
        loss = ad.mcd_loss(fn.decoder_forward(fn.encoder_forward(pts, enc, params), template, dec, params), pts, 3)
        assert np.isfinite(loss.item())
        ad.backward(loss)
        grads.append({n: t.grad.copy() for n, t in params.items()})
    assert all(np.array_equal(grads[0][n], grads[1][n]) for n in grads[0])
    assert np.array_equal(pts, frozen_pts) and np.array_equal(template, frozen_template)
    assert all(np.array_equal(before[n], params[n].data) for n in before)


@pytest.mark.parametrize("kind", ["encoder", "folding", "regressor", "autoencoder"])
def test_composite_gradients(kind):
    for seed in range(4):
        store, loss_fn = composite_instance(kind, seed)
        assert param_fd_error(store, loss_fn) < 1e-4


class TestAdam:
    def test_zero_gradient_no_change(self):
        s = ParamStore()
        s.add("w", [1.0, -2.0])
        s["w"].grad = np.zeros(2)
        ad.adam_step(s, ad.AdamConfig())
        assert s["w"].data.tolist() == [1.0, -2.0]

    def test_first_step_moves_lr(self):
        s = ParamStore()
        s.add("w", 0.0)
        s["w"].grad = np.array(1.0)
        cfg = ad.AdamConfig()
        ad.adam_step(s, cfg)
        # m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
        assert s["w"].data == pytest.approx(-cfg.learning_rate / (1 + cfg.epsilon), rel=1e-12)

    def test_hand_two_steps(self):
        s = ParamStore()
        s.add("w", 0.5)
        cfg = ad.AdamConfig(learning_rate=0.1)
        m = v = 0.0
        w = 0.5
        for t, g in enumerate([2.0, -1.0], start=1):
            s["w"].grad = np.array(g)
            ad.adam_step(s, cfg)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w -= 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert s["w"].data == pytest.approx(w, rel=1e-12)

    def test_identical_stores(self, rng):
        a = ParamStore()
        a.add("w", rng.normal(size=(3, 2)))
        b = a.copy()
        g = rng.normal(size=(3, 2))
        for s in (a, b):
            s["w"].grad = g.copy()
            ad.adam_step(s, ad.AdamConfig())
        assert a.state_equal(b)

    def test_missing_gradient(self):
        s = ParamStore()
        s.add("w", 1.0)
        with pytest.raises(ValueError):
            ad.adam_step(s, ad.AdamConfig())

    def test_bad_config(self):
        with pytest.raises(ValueError):
            ad.AdamConfig(learning_rate=0)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        s = ParamStore()
        ad.add_linear(s, "l0", 4, 3, rng)
        s.add("scalar", 2.5)
        for t in s._params.values():
            t.grad = rng.normal(size=t.shape)
        ad.adam_step(s, ad.AdamConfig())
        ad.save_checkpoint(s, tmp_path / "ck", meta={"note": "x"})
        back, meta = ad.load_checkpoint(tmp_path / "ck")
        assert meta["note"] == "x"
        assert back.state_equal(s)
        for n in s:
            assert np.array_equal(back.m[n], s.m[n])
            assert np.array_equal(back.v[n], s.v[n])
            assert back.steps[n] == s.steps[n]

    def test_manifest_layout(self, tmp_path, rng):
        s = ParamStore()
        s.add("w", rng.normal(size=(2, 2)))
        ad.save_checkpoint(s, tmp_path / "ck", with_adam=False)
        manifest = json.loads((tmp_path / "ck.json").read_text())
        raw = (tmp_path / "ck.bin").read_bytes()
        entry = manifest["tensors"][0]
        assert entry["name"] == "w" and entry["dtype"] == "f64"
        off = entry["offset"]
        assert np.array_equal(np.frombuffer(raw[off : off + 32], dtype="<f8").reshape(2, 2), s["w"].data)

    def test_byte_identical_resave(self, tmp_path, rng):
        s = ParamStore()
        s.add("w", rng.normal(size=(5,)))
        ad.save_checkpoint(s, tmp_path / "a")
        back, _ = ad.load_checkpoint(tmp_path / "a")
        ad.save_checkpoint(back, tmp_path / "b")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_init(self, rng):
        w = ad.kaiming_uniform(rng, 100, 50)
        assert w.shape == (100, 50)
        assert np.abs(w).max() <= np.sqrt(6 / 100)
