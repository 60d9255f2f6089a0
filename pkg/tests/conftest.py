import math

import numpy as np
import pytest


def loop_knn(source, query, k):
    """Pure-Python k nearest neighbours: sort (distance, index) pairs."""
    pairs = sorted((math.dist(query, p), i) for i, p in enumerate(source))
    return pairs[: min(k, len(source))]


def loop_modified_chamfer(a, b, k):
    """Double-loop evaluation of the k-neighbour Chamfer distance."""
    a = [tuple(map(float, p)) for p in a]
    b = [tuple(map(float, p)) for p in b]

    def term(src, dst):
        kk = min(k, len(dst))
        total = 0.0
        for p in src:
            ds = sorted(math.dist(p, q) for q in dst)[:kk]
            total += sum(ds) / kk
        return total / len(src)

    return term(a, b) + term(b, a)


def finite_difference(f, x, h=1e-4):
    """Central differences of scalar ``f`` w.r.t. every entry of array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def knn_margin(a, b, k):
    """Smallest gap between the k-th and (k+1)-th neighbour distance, both directions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    gaps = [np.inf]
    for src, dst in ((a, b), (b, a)):
        d = np.sort(np.linalg.norm(src[:, None] - dst[None], axis=2), axis=1)
        kk = min(k, d.shape[1])
        if kk < d.shape[1]:
            gaps.append(float((d[:, kk] - d[:, kk - 1]).min()))
    return min(gaps)


def tie_free_pair(rng, n_in, n_out, k, margin=1e-3, scale=1.0):
    """Random cloud pair whose neighbour sets cannot change under a perturbation < margin / 2."""
    while True:
        a = rng.normal(size=(n_in, 3)) * scale
        b = rng.normal(size=(n_out, 3)) * scale
        if knn_margin(a, b, k) > margin * scale:
            return a, b


def param_fd_error(params, loss_fn, h=1e-4):
    """Max relative error between backprop gradients and central differences over every parameter entry."""
    from foldalign.autodiff import backward

    params.zero_grad()
    backward(loss_fn())
    analytic = {n: t.grad.copy() for n, t in params.items()}
    worst_diff, worst_scale = 0.0, 0.0
    for name, t in params.items():
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = loss_fn().item()
            flat[j] = orig - h
            fm = loss_fn().item()
            flat[j] = orig
            numeric.reshape(-1)[j] = (fp - fm) / (2 * h)
        worst_diff = max(worst_diff, float(np.abs(analytic[name] - numeric).max()))
        worst_scale = max(worst_scale, float(np.abs(numeric).max()))
    return worst_diff / max(worst_scale, 1e-12)


def tiny_specs(coord_scale=1.0):
    from foldalign.foldnet import DecoderSpec, EncoderSpec

    enc = EncoderSpec(knn_k=3, point_mlp=(12, 5, 4), graph_widths=((4, 6), (6, 7)), codeword_mlp=(7, 5, 4),
                      codeword_dim=4, coord_scale=coord_scale)
    dec = DecoderSpec(template_size=6, fold_hidden=(5, 4), coord_scale=coord_scale)
    return enc, dec


def _top_two_gap(values, axis):
    """Gap between each max and the largest strictly smaller value.

    Exactly equal values are structural ties (identical rows, or dead ReLUs) that
    move together under any perturbation, so they are not counted as switches.
    """
    v = np.moveaxis(values, axis, -1)
    top = v.max(axis=-1, keepdims=True)
    below = np.where(v < top, v, -np.inf).max(axis=-1)
    gap = top[..., 0] - below
    return float(gap.min()) if gap.size else np.inf


def kink_margin(loss, groups=None, target=None, k=1):
    """Distance of the instance from the nearest non-differentiable switch in its graph."""
    from foldalign.autodiff import topological_order

    m = np.inf
    for node in topological_order(loss):
        if node.op == "relu":
            m = min(m, float(np.abs(node.parents[0].data).min()))
        elif node.op == "global_max_pool" and node.parents[0].shape[0] > 1:
            m = min(m, _top_two_gap(node.parents[0].data, 0))
        elif node.op == "reduce_max_rows" and groups is not None:
            m = min(m, _top_two_gap(node.parents[0].data[groups], 1))
        elif node.op == "mcd_loss" and target is not None:
            m = min(m, knn_margin(target, node.parents[0].data, k))
    return m


def _sub_store(params, prefix):
    from foldalign.autodiff import ParamStore

    sub = ParamStore()
    for name, t in params.items():
        if name.startswith(prefix):
            sub._params[name] = t
    return sub


def composite_instance(kind, seed, margin=2e-3):
    """A tie-free ``(params, loss_fn)`` pair for one network composite.

    kinds: ``encoder`` (codeword projected to a scalar), ``folding`` (decoder
    with MSE to a random target), ``regressor`` (MLP with MSE) and
    ``autoencoder`` (encoder + decoder + modified Chamfer loss).
    """
    from foldalign import autodiff as ad
    from foldalign import foldnet as fn
    from foldalign.alignreg import RegressionSpec, init_regressor, regressor_forward

    enc, dec = tiny_specs()
    template = fn.build_template(dec).points
    attempt = 0
    while True:
        rng = np.random.default_rng([seed, attempt])
        attempt += 1
        pts = fn.canonical_order(rng.normal(size=(12, 3)))
        _, groups = fn.local_features(pts, enc.knn_k)
        params = fn.init_autoencoder(enc, dec, int(rng.integers(2**32)))
        for _, t in params.items():
            t.data += rng.normal(scale=0.1, size=t.shape)
        if kind == "encoder":
            w = ad.Tensor(rng.normal(size=(enc.codeword_dim, 1)))
            store = _sub_store(params, "enc.")
            fn_ = lambda: ad.sum_all(ad.matmul(fn.encoder_forward(pts, enc, params), w))  # noqa: E731
            target, k = None, 1
        elif kind == "folding":
            code = ad.Tensor(rng.normal(size=(1, enc.codeword_dim)))
            goal = rng.normal(size=(dec.template_size, 3))
            store = _sub_store(params, "dec.")
            fn_ = lambda: ad.mse(fn.decoder_forward(code, template, dec, params), goal)  # noqa: E731
            target, k = None, 1
        elif kind == "regressor":
            store = init_regressor(RegressionSpec(widths=(32, 16, 8, 1)), int(rng.integers(2**32)))
            X = ad.Tensor(rng.normal(size=(5, 32)))
            y = rng.normal(size=(5, 1)) * 3
            fn_ = lambda: ad.mse(regressor_forward(X, store), y)  # noqa: E731
            target, k = None, 1
        elif kind == "autoencoder":
            store = params
            fn_ = lambda: ad.mcd_loss(  # noqa: E731
                fn.decoder_forward(fn.encoder_forward(pts, enc, params), template, dec, params), pts, 3)
            target, k = pts, 3
        else:
            raise ValueError(kind)
        if kink_margin(fn_(), groups, target, k) >= margin:
            return store, fn_
