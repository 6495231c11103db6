import numpy as np
import pytest

from londn.mri_forward import adjoint, fft2c, forward, ifft2c, normal_op, zero_filled

from conftest import full_single_coil, random_image, random_model


def centered_dft_oracle(x):
    """Direct O(N^2) centered unitary DFT summation."""
    h, w = x.shape
    out = np.zeros_like(x, dtype=np.complex128)
    # centered index k - floor(n/2) for both spatial and frequency axes
    ys = np.arange(h) - h // 2
    xs = np.arange(w) - w // 2
    for u in range(h):
        for v in range(w):
            ku, kv = u - h // 2, v - w // 2
            phase = np.exp(-2j * np.pi * (ku * ys[:, None] / h + kv * xs[None, :] / w))
            out[u, v] = np.sum(x * phase) / np.sqrt(h * w)
    return out


def test_fft2c_2x2_ones():
    x = np.ones((2, 2))
    expected = np.array([[0, 0], [0, 2]])
    np.testing.assert_allclose(centered_dft_oracle(x), expected, atol=1e-14)
    np.testing.assert_allclose(fft2c(x), expected, atol=1e-14)
    np.testing.assert_allclose(ifft2c(expected), x, atol=1e-14)


@pytest.mark.parametrize("shape", [(1, 1), (3, 5), (4, 4), (6, 7)])
def test_fft2c_matches_direct_sum(rng, shape):
    x = random_image(rng, *shape)
    np.testing.assert_allclose(fft2c(x), centered_dft_oracle(x), atol=1e-12)


def test_fft2c_scalar_identity():
    z = np.array([[3 - 4j]])
    assert fft2c(z)[0, 0] == pytest.approx(3 - 4j)
    assert ifft2c(z)[0, 0] == pytest.approx(3 - 4j)


@pytest.mark.parametrize("shape", [(8, 8), (5, 9), (64, 64)])
def test_unitarity_and_inverse(rng, shape):
    x = random_image(rng, *shape)
    k = fft2c(x)
    assert abs(np.linalg.norm(k) - np.linalg.norm(x)) <= 1e-10 * np.linalg.norm(x)
    np.testing.assert_allclose(ifft2c(k), x, rtol=0, atol=1e-10 * np.abs(x).max())


def test_forward_degenerate_is_fft(rng):
    model = full_single_coil(6)
    x = random_image(rng, 6)
    np.testing.assert_allclose(forward(model, x)[0], fft2c(x), atol=1e-14)
    np.testing.assert_allclose(adjoint(model, forward(model, x)), x, atol=1e-10)


def test_zero_in_zero_out(rng):
    model = random_model(rng, 6)
    assert not np.any(forward(model, np.zeros((6, 6))))
    assert not np.any(adjoint(model, np.zeros((2, 6, 6))))


def test_forward_matches_dense_matrix(rng):
    model = random_model(rng, 4, ncoils=2)
    q = 16
    # oracle: explicit matrix whose columns are A applied to basis vectors
    cols = []
    for j in range(q):
        e = np.zeros(q, dtype=np.complex128)
        e[j] = 1
        cols.append(forward(model, e.reshape(4, 4)).ravel())
    mat = np.array(cols).T
    x = random_image(rng, 4)
    np.testing.assert_allclose(forward(model, x).ravel(), mat @ x.ravel(), atol=1e-12)
    y = random_image(rng, 8, 4).reshape(2, 4, 4)
    np.testing.assert_allclose(adjoint(model, y).ravel(), mat.conj().T @ y.ravel(), atol=1e-12)


def test_masked_entries_exactly_zero_and_idempotent(rng):
    model = random_model(rng, 8)
    k = forward(model, random_image(rng, 8))
    off = model.mask.grid == 0
    assert np.all(k[:, off] == 0)
    np.testing.assert_array_equal(k * model.mask.grid, k)


def test_adjoint_dot_product_100_pairs(rng):
    worst = 0.0
    for _ in range(100):
        model = random_model(rng, 8, 6, ncoils=3)
        x = random_image(rng, 8, 6)
        y = random_image(rng, 24, 6).reshape(3, 8, 6)
        lhs = np.vdot(forward(model, x), y)
        rhs = np.vdot(x, adjoint(model, y))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    assert worst <= 1e-8


def test_normal_op_equals_composition(rng):
    model = random_model(rng, 8, 10, ncoils=3)
    x = random_image(rng, 8, 10)
    ref = adjoint(model, forward(model, x))
    np.testing.assert_allclose(normal_op(model, x), ref, rtol=0, atol=1e-12 * np.abs(ref).max())


def test_normal_op_hermitian_psd(rng):
    model = random_model(rng, 7, ncoils=2)
    for _ in range(10):
        x, z = random_image(rng, 7), random_image(rng, 7)
        a = np.vdot(normal_op(model, x), z)
        b = np.vdot(x, normal_op(model, z))
        assert abs(a - b) <= 1e-8 * abs(a)
        assert np.vdot(normal_op(model, x), x).real >= 0


def test_shape_mismatch(rng):
    model = random_model(rng, 4)
    with pytest.raises(ValueError):
        forward(model, np.zeros((5, 4)))
    with pytest.raises(ValueError):
        adjoint(model, np.zeros((3, 4, 4)))


def test_zero_filled(rng):
    model = random_model(rng, 6)
    y = forward(model, random_image(rng, 6))
    np.testing.assert_array_equal(zero_filled(model, y), adjoint(model, y))
