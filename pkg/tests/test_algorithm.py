import json

import numpy as np
import pytest

from londn.algorithm import (
    LondnConfig,
    londn_reconstruct,
    oracle_upper_loss,
    simulate_pair,
    upper_loss,
)
from londn.data_model import SamplingMask
from londn.denoiser import DenoiserConfig, init_params
from londn.metrics import psnr
from londn.mri_forward import ForwardModel, adjoint, forward
from londn.neighbors import knn
from londn.phantom import MaskSpec, PhantomSpec, gen_dataset, gen_heldout, gen_mask, gen_member
from londn.unrolled import UnrollConfig, unroll_forward

from conftest import random_image, random_model


def test_config_invariants():
    for bad in [dict(k=0), dict(S=0), dict(epochs=-1), dict(metric="cos")]:
        with pytest.raises(ValueError):
            LondnConfig(**bad)
    assert LondnConfig().resolved_epochs(warm=False) == 200
    assert LondnConfig().resolved_epochs(warm=True) == 10
    assert LondnConfig(epochs=3).resolved_epochs(warm=True) == 3


def test_simulate_pair_unitary_case(rng):
    gt = random_image(rng, 6)
    mask = SamplingMask(np.ones((6, 6), dtype=np.uint8))
    pair = simulate_pair(gt, np.ones((1, 6, 6)), mask)
    np.testing.assert_allclose(pair.x0, gt, atol=1e-10)


def test_simulate_pair_zero_and_definition(rng):
    model = random_model(rng, 6)
    pair = simulate_pair(np.zeros((6, 6)), model.smaps, model.mask)
    assert not np.any(pair.x0) and not np.any(pair.ksp)
    gt = random_image(rng, 6)
    pair = simulate_pair(gt, model.smaps, model.mask)
    np.testing.assert_array_equal(pair.x0, adjoint(model, forward(model, gt)))


def test_upper_loss_examples():
    q = 16
    img = np.zeros((4, 4))
    assert upper_loss(img, np.array([img, img, img]), 3) == 0.0
    other = img.copy()
    other[1, 2] = 1.0
    assert upper_loss(img, np.array([other]), 1) == pytest.approx(np.sqrt(1 / q))


def test_upper_loss_monotone_in_k(rng):
    gallery = np.array([random_image(rng, 4) for _ in range(8)])
    x = random_image(rng, 4)
    vals = [upper_loss(x, gallery, k) for k in range(1, 9)]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


@pytest.fixture(scope="module")
def small_problem():
    spec = PhantomSpec(size=16, n_clusters=3, per_cluster=5, n_coils=2)
    train, _ = gen_dataset(spec, 0)
    (gt, smaps), = gen_heldout(spec, 0, 1)[0]
    mask = gen_mask(MaskSpec(accel=4, center_lines=2, width=16, seed=1), height=16)
    model = ForwardModel(mask, smaps)
    ksp = forward(model, gt)
    dcfg = DenoiserConfig(n_layers=3, features=4)
    ucfg = UnrollConfig(L=2)
    params = init_params(dcfg, np.random.default_rng(0))
    return train, gt, model, ksp, dcfg, ucfg, params


def test_zero_epochs_is_plain_unroll(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    cfg = LondnConfig(k=3, S=1, epochs=0)
    x, out_params, trace = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params)
    ref, _ = unroll_forward(params, dcfg, ucfg, adjoint(model, ksp), model, ksp)
    np.testing.assert_array_equal(x, ref)
    for k in params:
        np.testing.assert_array_equal(out_params[k], params[k])
    assert trace.alternations[0].query == "aliased"


def test_first_search_uses_aliased_gallery(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    cfg = LondnConfig(k=4, S=2, epochs=1)
    _, _, trace = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params)
    aliased = np.array([simulate_pair(g, s, model.mask).x0 for g, s in train])
    assert trace.alternations[0].neighbors == knn(adjoint(model, ksp), aliased, 4, "NCC")
    gts = np.array([g for g, _ in train])
    assert trace.alternations[1].neighbors == knn(trace.alternations[0].recon, gts, 4, "NCC")
    assert trace.final_neighbors == knn(trace.alternations[1].recon, gts, 4, "NCC")
    assert len(trace.searches()) == 3
    d = json.loads(trace.to_json())
    assert [a["query"] for a in d["alternations"]] == ["aliased", "recon"]


def test_oracle_mode(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    train = list(train) + [(gt, model.smaps)]
    cfg = LondnConfig(k=3, S=2, epochs=0, oracle=True)
    _, _, trace = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params, gt=gt)
    assert len(trace.alternations) == 1
    ns = trace.alternations[0].neighbors
    assert ns.indices[0] == len(train) - 1
    assert ns.distances[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params)


def test_k_too_large(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    with pytest.raises(ValueError):
        londn_reconstruct(ksp, model, train, LondnConfig(k=99), dcfg, ucfg, init=params)


def test_pure_function_of_inputs(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    cfg = LondnConfig(k=3, S=1, epochs=2)
    a = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params)[0]
    b = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params)[0]
    np.testing.assert_array_equal(a, b)


def test_oracle_upper_loss_definition(small_problem):
    train, gt, *_ = small_problem
    gts = np.array([g for g, _ in train])
    assert oracle_upper_loss(gt, gts, 4) == upper_loss(gt, gts, 4, "L2")


@pytest.mark.slow
def test_identical_copies_improve_psnr():
    spec = PhantomSpec(size=64, n_coils=4)
    gt, smaps = gen_member(spec, 2, 1, 0)
    mask = gen_mask(MaskSpec(accel=4, center_lines=8, width=64, seed=2))
    model = ForwardModel(mask, smaps)
    ksp = forward(model, gt)
    train = [(gt, smaps)] * 2
    dcfg = DenoiserConfig()
    cfg = LondnConfig(k=2, S=1, epochs=100, batch=2)
    x, _, _ = londn_reconstruct(ksp, model, train, cfg, dcfg, UnrollConfig(), init=init_params(dcfg, np.random.default_rng(0)))
    x0 = adjoint(model, ksp)
    assert psnr(x, gt) >= psnr(x0, gt) + 6


def test_oracle_training_budget(small_problem):
    train, gt, model, ksp, dcfg, ucfg, params = small_problem
    cfg = LondnConfig(k=3, S=2, epochs=1, oracle=True)
    _, _, trace = londn_reconstruct(ksp, model, train, cfg, dcfg, ucfg, init=params, gt=gt)
    assert len(trace.alternations[0].train_loss) == 2
