import math

import numpy as np
import pytest

from turbrestore import (ContextualConfig, DiscriminatorStub, IdentityExtractor,
                         LossWeights, RandomProjectionExtractor, feature_l1,
                         l2_loss, l_rec, make_result_set, spcx,
                         spcx_multi_loss)
from turbrestore.objective import softplus

from conftest import random_image

CFG = ContextualConfig(rate=2)


def make_set(seeds, h=8, w=8, c=1):
    return make_result_set([random_image(s, h, w, c) for s in seeds])


def test_l2_zero_for_equal():
    img = random_image(0, 4, 4, 1)
    assert l2_loss(img, img) == 0.0


def test_l2_unit_gap():
    assert l2_loss(np.zeros((3, 3, 1)), np.ones((3, 3, 1))) == 1.0


def test_l2_two_targets_midpoint():
    pred = np.full((3, 3, 1), 0.5)
    targets = [np.zeros((3, 3, 1)), np.ones((3, 3, 1))]
    assert l2_loss(pred, targets) == pytest.approx(0.25, abs=1e-15)


def test_l2_shape_mismatch():
    with pytest.raises(ValueError):
        l2_loss(np.zeros((3, 3, 1)), np.zeros((4, 3, 1)))


def test_spcx_multi_self():
    target = random_image(1, 8, 8, 1)
    pred_set = make_result_set([target, target])
    assert spcx_multi_loss(pred_set, target, CFG) <= 0.05


def test_spcx_multi_permutation_symmetric():
    target = random_image(2, 8, 8, 1)
    imgs = [random_image(s, 8, 8, 1) for s in (3, 4, 5, 6)]
    a = spcx_multi_loss(make_result_set(imgs), target, CFG)
    b = spcx_multi_loss(make_result_set(imgs[::-1]), target, CFG)
    assert a == b


def test_spcx_multi_matches_direct_sum():
    target = random_image(7, 8, 8, 1)
    imgs = [random_image(s, 8, 8, 1) for s in (8, 9, 10, 11)]
    expect = sum(spcx(target, im, CFG) for im in imgs) / 4
    assert spcx_multi_loss(make_result_set(imgs), target, CFG) == pytest.approx(
        expect, abs=1e-12)


def test_default_weights():
    w = LossWeights()
    assert (w.adv, w.per, w.id) == (1.0, 0.1, 10.0)


def stub_parts(shape=(8, 8, 1), seed=0):
    phi = IdentityExtractor()
    eta = IdentityExtractor()
    disc = DiscriminatorStub(shape, seed=seed)
    return phi, eta, disc


def test_l_rec_total_is_weighted_breakdown_sum():
    target = random_image(20, 8, 8, 1)
    pred_set = make_set((21, 22, 23, 24))
    w = LossWeights(adv=0.7, per=0.3, id=2.5)
    phi, eta, disc = stub_parts()
    total, br = l_rec(pred_set, target, CFG, w, phi, eta, disc)
    assert total == br["total"]
    recon = br["spcx"] - 0.7 * br["adv"] + 0.3 * br["per"] + 2.5 * br["id"]
    assert abs(total - recon) < 1e-12


def test_l_rec_lambda_linearity():
    target = random_image(25, 8, 8, 1)
    pred_set = make_set((26, 27))
    phi, eta, disc = stub_parts()
    _, br1 = l_rec(pred_set, target, CFG, LossWeights(1, 0.1, 10), phi, eta, disc)
    _, br2 = l_rec(pred_set, target, CFG, LossWeights(1, 0.1, 20), phi, eta, disc)
    assert br2["id"] == br1["id"]  # breakdown reports unweighted terms
    assert br2["spcx"] == br1["spcx"]
    assert br2["adv"] == br1["adv"]
    assert br2["per"] == br1["per"]
    delta = br2["total"] - br1["total"]
    assert abs(delta - 10 * br1["id"]) < 1e-12


def test_l_rec_zero_lambdas_on_exact_set():
    target = random_image(30, 8, 8, 1)
    pred_set = make_result_set([target, target])
    phi, eta, disc = stub_parts()
    total, br = l_rec(pred_set, target, CFG, LossWeights(0, 0, 0), phi, eta, disc)
    assert total <= 0.05
    assert total == br["spcx"]
    assert br["per"] == 0.0 and br["id"] == 0.0


def test_l_rec_matches_straight_line_oracle():
    target = random_image(40, 8, 8, 1)
    imgs = [random_image(s, 8, 8, 1) for s in (41, 42)]
    pred_set = make_result_set(imgs)
    w = LossWeights(1.0, 0.1, 10.0)
    phi, eta, disc = stub_parts()
    total, _ = l_rec(pred_set, target, CFG, w, phi, eta, disc)
    # explicit composition, one output at a time
    terms = []
    for im in imgs:
        t = spcx(target, im, CFG)
        t -= 1.0 * math.log1p(math.exp(disc.score(im)))
        t += 0.1 * np.mean(np.abs(target - im))
        t += 10.0 * np.mean(np.abs(target - im))
        terms.append(t)
    assert total == pytest.approx(sum(terms) / 2, abs=1e-10)


def test_l_rec_output_permutation_symmetry():
    target = random_image(50, 8, 8, 1)
    imgs = [random_image(s, 8, 8, 1) for s in (51, 52, 53, 54)]
    w = LossWeights()
    phi, eta, disc = stub_parts()
    t1, _ = l_rec(make_result_set(imgs), target, CFG, w, phi, eta, disc)
    t2, _ = l_rec(make_result_set(imgs[::-1]), target, CFG, w, phi, eta, disc)
    assert t1 == t2


def test_random_projection_extractor_deterministic():
    img = random_image(60, 8, 8, 1)
    a = RandomProjectionExtractor((8, 8, 1), seed=3)
    b = RandomProjectionExtractor((8, 8, 1), seed=3)
    fa, fb = a.extract(img), b.extract(img)
    assert len(fa) == 2
    for x, y in zip(fa, fb):
        assert np.array_equal(x, y)
    assert feature_l1(fa, fb) == 0.0


def test_random_projection_in_l_rec():
    target = random_image(61, 8, 8, 1)
    pred_set = make_set((62, 63))
    phi = RandomProjectionExtractor((8, 8, 1), seed=1)
    eta = RandomProjectionExtractor((8, 8, 1), seed=2)
    disc = DiscriminatorStub((8, 8, 1), seed=1)
    total, br = l_rec(pred_set, target, CFG, LossWeights(), phi, eta, disc)
    assert np.isfinite(total)
    assert br["per"] > 0 and br["id"] > 0


def test_softplus_stable():
    assert softplus(0.0) == pytest.approx(math.log(2))
    assert np.isfinite(softplus(1000.0))
    assert softplus(1000.0) == pytest.approx(1000.0)
    assert softplus(-1000.0) == pytest.approx(0.0, abs=1e-12)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(adv=-1)
