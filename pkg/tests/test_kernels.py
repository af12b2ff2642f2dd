import numpy as np
import pytest

from sarreflect import kernels

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled",
                              reason="compiled extension not built")


@compiled
def test_far_field_backends_agree():
    rng = np.random.default_rng(0)
    inc = rng.uniform(0, np.pi / 2, 200)
    az = rng.uniform(0, np.pi / 2, 200)
    a = kernels.trihedral_far_field(inc, az, 0.3, 201.0, backend="compiled")
    b = kernels.trihedral_far_field(inc, az, 0.3, 201.0, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.abs(b).max())


@compiled
def test_chirp_backends_agree():
    rng = np.random.default_rng(1)
    tau = rng.uniform(1e-6, 2e-6, 6)
    amp = rng.uniform(0.5, 1.0, 6)
    amp[2] = 0.0
    args = (0.9e-6, 5e8, tau, amp, 9.6e9, 1e13, 2e-7)
    a = kernels.chirp_echo_accumulate(np.zeros((6, 800), complex), *args, backend="compiled")
    b = kernels.chirp_echo_accumulate(np.zeros((6, 800), complex), *args, backend="python")
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert not np.any(a[2])


@compiled
def test_sinc_backends_agree():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(5, 64)) + 1j * rng.normal(size=(5, 64))
    pos = rng.uniform(-3, 66, (5, 40))
    a = kernels.sinc_interp(data, pos, backend="compiled")
    b = kernels.sinc_interp(data, pos, backend="python")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_sinc_hits_samples_at_integer_positions():
    data = np.arange(20, dtype=complex)[None, :] * (1 + 1j)
    pos = np.array([[3.0, 7.0, 12.0]])
    np.testing.assert_allclose(kernels.sinc_interp(data, pos, backend="python"), data[:, [3, 7, 12]])


@compiled
def test_splat_backends_agree():
    rng = np.random.default_rng(3)
    table = rng.normal(size=(2, 3, 3, 9, 9)) + 1j * rng.normal(size=(2, 3, 3, 9, 9))
    n = 7
    args = (table, rng.integers(0, 2, n), rng.integers(-6, 40, n), rng.integers(-6, 40, n),
            rng.integers(0, 3, n), rng.integers(0, 3, n),
            rng.normal(size=n) + 1j * rng.normal(size=n), rng.normal(size=n),
            rng.uniform(0, 8, n))
    a = kernels.splat_patches(np.zeros((40, 40), complex), *args, backend="compiled")
    b = kernels.splat_patches(np.zeros((40, 40), complex), *args, backend="python")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_unknown_backend_without_extension(monkeypatch):
    monkeypatch.setattr(kernels, "_compiled", None)
    with pytest.raises(RuntimeError):
        kernels.trihedral_far_field([0.5], [0.5], 0.3, 201.0, backend="compiled")
