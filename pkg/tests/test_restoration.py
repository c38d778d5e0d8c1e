"""Image flow checks: formats, the exponent map, and the energy descent.

The flow is a forward-backward step for an explicit edge-summed energy,
so the load-bearing test here differentiates that energy numerically and
compares against the update direction; everything else (formats, clamps,
warnings) hangs off known closed forms or frozen fixture behavior.
"""

import os

import numpy as np
import pytest

from pxlaplace.errors import ImageRangeError, ParameterError, PgmFormatError
from pxlaplace.exponent import ExponentField
from pxlaplace.restoration import (
    ImageGrid,
    build_exponent_from_image,
    clr_energy,
    clr_flux,
    continuity_constant,
    evolve_flow,
    read_pgm,
    write_pgm,
)
from pxlaplace.restoration import _clr_divergence

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "fixtures", "step64.pgm")


def _noisy(shape=(24, 24), lo=0.3, hi=0.7, seed=0):
    rng = np.random.default_rng(seed)
    return ImageGrid(rng.uniform(lo, hi, shape))


def _const_p(image, value):
    return ExponentField.from_values(image.as_grid(), np.full(image.values.shape, value))


def test_image_grid_validation():
    with pytest.raises(ImageRangeError):
        ImageGrid(np.full((4, 4), 1.5))
    with pytest.raises(ImageRangeError):
        ImageGrid(np.full((4, 4), np.nan))
    with pytest.raises(ParameterError):
        ImageGrid(np.zeros(16))


def test_pgm_roundtrip_binary_and_ascii(tmp_path):
    img = _noisy((13, 17), 0.0, 1.0, seed=2)
    for binary in (True, False):
        path = tmp_path / f"t_{binary}.pgm"
        write_pgm(path, img, binary=binary)
        back = read_pgm(path)
        # 8-bit quantization loses at most half a level
        assert np.max(np.abs(back.values - img.values)) <= 0.5 / 255.0 + 1e-12
        assert back.values.shape == img.values.shape


def test_pgm_roundtrip_exact_on_quantized_values(tmp_path):
    rng = np.random.default_rng(4)
    img = ImageGrid(rng.integers(0, 256, (9, 9)).astype(float) / 255.0)
    path = tmp_path / "q.pgm"
    write_pgm(path, img)
    assert np.array_equal(read_pgm(path).values, img.values)


def test_read_pgm_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(PgmFormatError):
        read_pgm(path)


def test_read_pgm_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P2\n2 2\n65535\n0 0 0 0\n")
    with pytest.raises(PgmFormatError):
        read_pgm(path)


def test_exponent_map_flat_image_is_two():
    img = ImageGrid(np.full((16, 16), 0.5))
    p = build_exponent_from_image(img, sigma=1.0, k=10.0)
    assert np.allclose(p.values, 2.0)


def test_exponent_map_drops_at_edges():
    # hard step, no smoothing, huge contrast: p pinned to the lower clamp
    vals = np.zeros((16, 16))
    vals[:, 8:] = 1.0
    p = build_exponent_from_image(ImageGrid(vals), sigma=0.0, k=1e6)
    assert p.values.min() == pytest.approx(1.001)
    assert p.values.max() == pytest.approx(2.0)
    # the dip is localized to the step columns
    assert np.all(p.values[:, :6] == pytest.approx(2.0))


def test_exponent_map_heavy_smoothing_flattens():
    vals = np.zeros((16, 16))
    vals[:, 8:] = 1.0
    mild = build_exponent_from_image(ImageGrid(vals), sigma=8.0, k=3.0)
    sharp = build_exponent_from_image(ImageGrid(vals), sigma=0.0, k=3.0)
    assert mild.values.min() > sharp.values.min()


def test_exponent_map_parameter_validation():
    img = ImageGrid(np.full((4, 4), 0.5))
    with pytest.raises(ParameterError):
        build_exponent_from_image(img, sigma=-1.0)
    with pytest.raises(ParameterError):
        build_exponent_from_image(img, k=0.0)


def test_continuity_constant_joins_branches():
    # beta^p/p at the seam equals beta - C(beta, p) by construction
    for beta, p in [(1.0, 1.5), (0.5, 1.2), (2.0, 2.0)]:
        inner = beta**p / p
        outer = beta - continuity_constant(beta, p)
        assert inner == pytest.approx(outer, rel=1e-14)


def test_clr_flux_branches_and_zero():
    p = 1.5
    assert np.all(clr_flux(None, np.zeros(2), p, beta=1.0) == 0.0)
    xi = np.array([0.09, 0.12])  # |xi| = 0.15 < beta
    inner = clr_flux(None, xi, p, beta=1.0)
    assert np.allclose(inner, 0.15 ** (p - 2.0) * xi)
    big = np.array([3.0, 4.0])  # |xi| = 5 > beta
    outer = clr_flux(None, big, p, beta=1.0)
    assert np.allclose(outer, big / 5.0)
    assert np.linalg.norm(outer) == pytest.approx(1.0)


def test_clr_flux_continuous_at_seam_for_beta_one():
    p = 1.3
    lo = clr_flux(None, np.array([1.0 - 1e-9, 0.0]), p, beta=1.0)
    hi = clr_flux(None, np.array([1.0 + 1e-9, 0.0]), p, beta=1.0)
    assert np.allclose(lo, hi, atol=1e-8)


def test_clr_flux_magnitude_bounded_for_unit_range_images():
    # |flux| <= max(beta^{p-1}, 1); with beta = 1 the bound is exactly 1
    rng = np.random.default_rng(9)
    for _ in range(50):
        xi = rng.uniform(-1.0, 1.0, 2)
        p = rng.uniform(1.001, 2.0)
        f = clr_flux(None, xi, p, beta=1.0)
        assert np.linalg.norm(f) <= 1.0 + 1e-12


def test_clr_energy_ramp_closed_form():
    # u = image = a*j: only axis-1 edges contribute, each a^p/p
    a, pc = 1.0 / 14.0, 1.5
    vals = np.tile(a * np.arange(8), (8, 1))
    img = ImageGrid(vals)
    p = _const_p(img, pc)
    expected = 8 * 7 * a**pc / pc
    assert clr_energy(img, img, p) == pytest.approx(expected, rel=1e-12)


def test_clr_energy_fidelity_term():
    img = ImageGrid(np.full((6, 6), 0.25))
    shifted = ImageGrid(np.full((6, 6), 0.75))
    p = _const_p(img, 1.5)
    # constant fields have no edge energy; fidelity = sum (0.5)^2
    assert clr_energy(shifted, img, p) == pytest.approx(36 * 0.25)


def test_divergence_is_minus_energy_gradient():
    # central-difference derivative of the energy against the update field
    img = _noisy((12, 12), 0.25, 0.75, seed=6)
    u = _noisy((12, 12), 0.2, 0.8, seed=7)
    p = build_exponent_from_image(img, sigma=1.2, k=3.0)
    beta = 1.0
    div = _clr_divergence(u.values, p.values, beta)
    grad_expected = -div + 2.0 * (u.values - img.values)
    rng = np.random.default_rng(8)
    eps = 1e-6
    for _ in range(8):
        i, j = rng.integers(0, 12, 2)
        bump = np.zeros((12, 12))
        bump[i, j] = eps
        ep = clr_energy(ImageGrid(u.values + bump), img, p, beta)
        em = clr_energy(ImageGrid(u.values - bump), img, p, beta)
        fd = (ep - em) / (2 * eps)
        assert fd == pytest.approx(grad_expected[i, j], rel=2e-4, abs=1e-6)


def test_flow_fixed_point_on_constant_image():
    img = ImageGrid(np.full((10, 10), 0.4))
    p = _const_p(img, 2.0)
    out = evolve_flow(img, p, dt=0.2, steps=5)
    assert np.allclose(out.u.values, 0.4)
    assert np.allclose(out.energy_trace, 0.0)
    assert np.all(out.clamped_counts == 0)
    # blank image: slope floor gives the heat heuristic h^2/4 = 0.25
    assert out.dt_heuristic == pytest.approx(0.25)
    assert not out.warned


def test_flow_energy_monotone_on_noise():
    img = _noisy(seed=12)
    p = build_exponent_from_image(img, sigma=1.2, k=3.0)
    out = evolve_flow(img, p, dt=0.2, steps=40)
    assert np.all(np.diff(out.energy_trace) <= 1e-12)
    assert out.energy_trace[-1] < out.energy_trace[0]


def test_flow_denoises_variance():
    rng = np.random.default_rng(21)
    img = ImageGrid(np.clip(0.5 + rng.normal(0.0, 0.05, (32, 32)), 0.0, 1.0))
    p = _const_p(img, 2.0)
    out = evolve_flow(img, p, dt=0.2, steps=10)
    assert np.var(out.u.values) < 0.5 * np.var(img.values)


def test_flow_warns_above_heuristic():
    img = _noisy(seed=3)
    p = _const_p(img, 2.0)
    with pytest.warns(UserWarning, match="stability heuristic"):
        out = evolve_flow(img, p, dt=0.3, steps=2)
    assert out.warned


def test_flow_inversion_equivariance_for_p2():
    # heat flow with proximal fidelity commutes with u -> 1 - u
    img = _noisy((16, 16), 0.25, 0.75, seed=5)
    inv = ImageGrid(1.0 - img.values)
    p = _const_p(img, 2.0)
    a = evolve_flow(img, p, beta=1e9, dt=0.2, steps=15)
    b = evolve_flow(inv, p, beta=1e9, dt=0.2, steps=15)
    assert np.allclose(b.u.values, 1.0 - a.u.values, atol=1e-12)


def test_flow_dirichlet_pins_border():
    img = _noisy(seed=14)
    p = build_exponent_from_image(img, sigma=1.0, k=3.0)
    out = evolve_flow(img, p, dt=0.2, steps=8, dirichlet=True)
    assert np.array_equal(out.u.values[0, :], img.values[0, :])
    assert np.array_equal(out.u.values[:, 0], img.values[:, 0])


def test_flow_parameter_validation():
    img = _noisy()
    p = _const_p(img, 2.0)
    with pytest.raises(ParameterError):
        evolve_flow(img, p, dt=0.0)
    with pytest.raises(ParameterError):
        evolve_flow(img, p, steps=0)
    with pytest.raises(ParameterError):
        evolve_flow(img, p, beta=0.0)
    with pytest.raises(ParameterError):
        evolve_flow(img, p, u0=ImageGrid(np.full((3, 3), 0.5)))


def test_fixture_short_run_monotone():
    img = read_pgm(FIXTURE)
    assert img.values.shape == (64, 64)
    p = build_exponent_from_image(img, sigma=1.2, k=3.0)
    out = evolve_flow(img, p, dt=0.2, steps=20)
    assert not out.warned
    assert np.all(np.diff(out.energy_trace) <= 1e-12)
    assert np.all(out.clamped_counts == 0)
