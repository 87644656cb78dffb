import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbrestore import (AggregationForm, ContextualConfig, IdentityExtractor,
                         PkMode, cosine_distance_matrix, cx, kernel, make_rng,
                         normalize_distances, permute_subimages, pk_decompose,
                         pk_recompose, spcx, spcx_grad)
from turbrestore.pk import SubImageCollection

from conftest import random_image


def make_coll(vectors):
    v = np.asarray(vectors, dtype=np.float64)
    return SubImageCollection(v, PkMode.BLOCK, 1, (v.shape[0], 1, v.shape[1]))


# ---------------------------------------------------------------- oracles

def spcx_loop_oracle(x, y, rate, mode, h=0.2, eps=1e-5, form="max"):
    """Straight-line re-derivation with explicit loops, no matrix tricks."""
    H, W, C = x.shape

    def decomp(img):
        vecs = []
        if mode is PkMode.BLOCK:
            for i in range(H // rate):
                for j in range(W // rate):
                    vecs.append([img[i * rate + s, j * rate + t, c]
                                 for s in range(rate)
                                 for t in range(rate)
                                 for c in range(C)])
        else:
            for s in range(rate):
                for t in range(rate):
                    vecs.append([img[s + a * rate, t + b * rate, c]
                                 for a in range(H // rate)
                                 for b in range(W // rate)
                                 for c in range(C)])
        return vecs

    xs, ys = decomp(x), decomp(y)
    n, m = len(xs), len(ys)
    d = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            dot = sum(a * b for a, b in zip(xs[i], ys[j]))
            nx = math.sqrt(sum(a * a for a in xs[i]))
            ny = math.sqrt(sum(b * b for b in ys[j]))
            d[i][j] = 1.0 - dot / (nx * ny)
    a_rows = []
    for i in range(n):
        dmin = min(d[i])
        dt = [dij / (dmin + eps) for dij in d[i]]
        w = [math.exp((1.0 - v) / h) for v in dt]
        tot = sum(w)
        a_rows.append([v / tot for v in w])
    if form == "max":
        return -math.log(sum(max(row) for row in a_rows) / n + eps)
    return sum(-math.log(sum(row) + eps) for row in a_rows) / n


# ----------------------------------------------------- distance matrices

def test_cosine_identity_like():
    eye = make_coll(np.eye(3))
    d = cosine_distance_matrix(eye, eye)
    assert np.allclose(np.diag(d), 0.0)
    off = d[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1.0)


def test_cosine_extremes():
    x = make_coll([[1.0, 0.0]])
    assert cosine_distance_matrix(x, make_coll([[0.0, 1.0]]))[0, 0] == pytest.approx(1.0)
    assert cosine_distance_matrix(x, make_coll([[-1.0, 0.0]]))[0, 0] == pytest.approx(2.0)


def test_cosine_matches_pairwise_oracle():
    rng = make_rng(3)
    vx = rng.normal(0, 1, (3, 4))
    vy = rng.normal(0, 1, (3, 4))
    d = cosine_distance_matrix(make_coll(vx), make_coll(vy))
    for i in range(3):
        for j in range(3):
            expect = 1 - (vx[i] @ vy[j]) / (np.linalg.norm(vx[i]) * np.linalg.norm(vy[j]))
            assert abs(d[i, j] - expect) < 1e-12


def test_zero_norm_vector_reports_index():
    bad = make_coll([[1.0, 1.0], [0.0, 0.0]])
    good = make_coll([[1.0, 0.0]])
    with pytest.raises(ValueError, match="index 1"):
        cosine_distance_matrix(bad, good)


def test_normalize_row_with_zero_min():
    d = np.array([[0.0, 0.3]])
    dt = normalize_distances(d, 1e-5)
    assert dt[0, 0] == 0.0
    assert dt[0, 1] == pytest.approx(0.3 / 1e-5)


def test_normalize_constant_row():
    dt = normalize_distances(np.array([[0.4, 0.4, 0.4]]), 1e-5)
    assert np.all(dt < 1.0)
    assert np.allclose(dt, 0.4 / (0.4 + 1e-5))


def test_normalize_hand_row():
    dt = normalize_distances(np.array([[0.2, 0.4, 0.8]]), 1e-5)
    # hand division by (0.2 + 1e-5); approximately [1, 2, 4]
    assert np.allclose(dt, [0.2 / 0.20001, 0.4 / 0.20001, 0.8 / 0.20001],
                       atol=1e-12)
    assert np.allclose(dt, [1.0, 2.0, 4.0], atol=2.1e-4)


# ------------------------------------------------------------- kernel

@settings(deadline=None, max_examples=50)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 8), m=st.integers(1, 8))
def test_kernel_rows_stochastic(seed, n, m):
    d = make_rng(seed).uniform(0, 4, (n, m))
    a = kernel(d, 0.2)
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-9)


def test_kernel_delta_behavior():
    dt = np.array([[0.1, 5.0, 6.0, 7.0]])
    a = kernel(dt, 0.2)
    assert a[0, 0] > 0.99
    assert np.all(a[0, 1:] < 1e-9)


def test_kernel_hand_row():
    a = kernel(np.array([[1.0, 2.0]]), 0.2)
    expect = np.exp([0.0, -5.0])
    expect /= expect.sum()
    assert np.allclose(a[0], expect, atol=1e-5)
    assert a[0, 0] == pytest.approx(0.99331, abs=1e-5)
    assert a[0, 1] == pytest.approx(0.00669, abs=1e-5)


def test_kernel_overflow_safety():
    a = kernel(np.array([[-4000.0, 0.0]]), 0.2)
    assert np.all(np.isfinite(a))
    assert a[0, 0] == pytest.approx(1.0)


# --------------------------------------------------------------- spcx

def test_spcx_self_distance_small():
    for seed in range(5):
        img = random_image(seed, 8, 8, 1)
        assert spcx(img, img, ContextualConfig(rate=2)) <= 0.05


def test_spcx_block_permutation_exact():
    x = random_image(10, 8, 8, 1)
    y = random_image(11, 8, 8, 1)
    cfg = ContextualConfig(rate=2)
    coll = pk_decompose(y, 2, PkMode.BLOCK)
    perm = make_rng(12).permutation(coll.count)
    y_perm = pk_recompose(permute_subimages(coll, perm))
    assert spcx(x, y_perm, cfg) == spcx(x, y, cfg)
    # permuting X relabels the outer mean only
    collx = pk_decompose(x, 2, PkMode.BLOCK)
    x_perm = pk_recompose(permute_subimages(collx, make_rng(13).permutation(collx.count)))
    assert spcx(x_perm, y, cfg) == spcx(x, y, cfg)


def test_spcx_self_equals_permuted_self():
    x = random_image(14, 8, 8, 1)
    cfg = ContextualConfig(rate=2)
    coll = pk_decompose(x, 2, PkMode.BLOCK)
    x_perm = pk_recompose(permute_subimages(coll, make_rng(15).permutation(coll.count)))
    assert spcx(x, x_perm, cfg) == spcx(x, x, cfg)


def test_spcx_matches_loop_oracle():
    x = random_image(20, 8, 8, 1)
    y = random_image(21, 8, 8, 1)
    for mode in PkMode:
        for form in AggregationForm:
            cfg = ContextualConfig(rate=2, mode=mode, form=form)
            expect = spcx_loop_oracle(x, y, 2, mode, form=form.value)
            assert spcx(x, y, cfg) == pytest.approx(expect, abs=1e-10)


def test_spcx_sumlog_is_constant():
    cfg = ContextualConfig(rate=2, form=AggregationForm.SUM_LOG)
    const = -math.log(1 + 1e-5)
    for seed in range(10):
        x = random_image(seed, 8, 8, 1)
        y = random_image(seed + 100, 8, 8, 1)
        assert spcx(x, y, cfg) == pytest.approx(const, abs=1e-9)


def test_spcx_scale_invariance():
    x = random_image(30, 8, 8, 1) * 0.5
    y = random_image(31, 8, 8, 1) * 0.5
    cfg = ContextualConfig(rate=2)
    base = spcx(x, y, cfg)
    assert spcx(1.7 * x, 1.7 * y, cfg) == pytest.approx(base, abs=1e-12)


def test_spcx_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        spcx(random_image(0, 8, 8, 1), random_image(0, 8, 6, 1),
             ContextualConfig(rate=2))


# ----------------------------------------------------------------- cx

def test_cx_self_small():
    img = random_image(40, 6, 6, 3)
    assert cx(img, img, IdentityExtractor()) <= 0.05


def test_cx_equals_phase_spcx_with_identity_extractor():
    x = random_image(41, 6, 6, 3)
    y = random_image(42, 6, 6, 3)
    expect = spcx(x, y, ContextualConfig(rate=6, mode=PkMode.PHASE))
    assert cx(x, y, IdentityExtractor()) == pytest.approx(expect, abs=1e-12)


def test_cx_scale_invariance():
    x = random_image(43, 6, 6, 3) * 0.4
    y = random_image(44, 6, 6, 3) * 0.4
    base = cx(x, y, IdentityExtractor())
    assert cx(2.0 * x, 2.0 * y, IdentityExtractor()) == pytest.approx(base, abs=1e-12)


# ----------------------------------------------------------- gradient

def fd_grad(x, y, cfg, step=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        a = x.copy()
        a[idx] += step
        b = x.copy()
        b[idx] -= step
        g[idx] = (spcx(a, y, cfg) - spcx(b, y, cfg)) / (2 * step)
    return g


def assert_fd_match(x, y, cfg, rel_tol=1e-4):
    analytic = fd = None
    analytic = spcx_grad(x, y, cfg)
    fd = fd_grad(x, y, cfg)
    mask = np.abs(analytic) > 1e-8
    if mask.any():
        rel = np.abs(fd[mask] - analytic[mask]) / np.abs(analytic[mask])
        assert rel.max() < rel_tol


def test_grad_matches_fd_maxlog():
    for seed in range(5):
        x = random_image(seed, 6, 6, 1)
        y = random_image(seed + 50, 6, 6, 1)
        assert_fd_match(x, y, ContextualConfig(rate=2))


def test_grad_sumlog_identically_zero():
    x = random_image(60, 6, 6, 1)
    y = random_image(61, 6, 6, 1)
    cfg = ContextualConfig(rate=2, form=AggregationForm.SUM_LOG)
    assert np.array_equal(spcx_grad(x, y, cfg), np.zeros_like(x))
    # and the distance really is flat: FD slope is pure rounding noise
    fd = fd_grad(x, y, cfg)
    assert np.max(np.abs(fd)) < 1e-6


def test_grad_mean_shift_matches_fd():
    x = random_image(70, 6, 6, 1)
    y = random_image(71, 6, 6, 1)
    assert_fd_match(x, y, ContextualConfig(rate=2, mean_shift=True))


def test_grad_finite_at_duplicate_target_subimages():
    x = random_image(80, 6, 6, 1)
    y = random_image(81, 6, 6, 1)
    # duplicate one target sub-image: exact column tie in the kernel
    coll = pk_decompose(y, 2, PkMode.BLOCK)
    v = coll.vectors.copy()
    v[1] = v[0]
    y_tied = pk_recompose(type(coll)(v, coll.mode, coll.rate, coll.source_shape))
    cfg = ContextualConfig(rate=2)
    g = spcx_grad(x, y_tied, cfg)
    assert np.all(np.isfinite(g))
    assert_fd_match(x, y_tied, cfg)
