"""Acceptance gate: ten end-to-end checks, one per release criterion.

Each test prints a single bracketed PASS line with its pinned numbers so
a log scan shows the whole gate at a glance.  Tolerances and runtime
caps are hard-coded on purpose; loosening one is a release decision,
not a test edit.  Run with `pytest tests/test_acceptance.py -s`.
"""

import hashlib
import os
import subprocess
import sys
import time

import numpy as np

from pxlaplace.exponent import ExponentField, build_exponent_field, exponent_expression
from pxlaplace.grid import Grid, GridFunction
from pxlaplace.harness import (
    check_viscosity_supersolution,
    check_weak_supersolution,
    comparison_experiment,
    comparison_shrinking_scan,
    pipeline_viscosity_to_weak,
)
from pxlaplace.infconv import inf_convolve, jet_from_argmin, semiconcavity_check
from pxlaplace.lebesgue import check_modular_norm_relations, luxemburg_norm, modular
from pxlaplace.operators import divergence_flux_fd, probe_preset, strong_operator
from pxlaplace.restoration import build_exponent_from_image, evolve_flow, read_pgm
from pxlaplace.solver import solve_fixed_point, solve_variational
from pxlaplace.sources import source_preset

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")


def _const_p(grid, value):
    return ExponentField.from_values(grid, np.full(grid.shape, float(value)))


def test_criterion_01_norm_matches_constant_exponent_closed_form():
    g = Grid.from_shape((0.0, 1.0), 129)
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for p_const in (2.0, 3.0):
        p = _const_p(g, p_const)
        for _ in range(10):
            coeffs = rng.normal(0.0, 1.0, 5)
            vals = np.polynomial.polynomial.polyval(g.axis_nodes(0), coeffs)
            u = GridFunction(g, vals)
            closed = g.integrate(np.abs(vals) ** p_const) ** (1.0 / p_const)
            worst = max(worst, abs(luxemburg_norm(u, p) - closed))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-8
    assert elapsed < 1.0
    print(
        f"\n[criterion 1] PASS: max |norm - closed form| = {worst:.3e} "
        f"over 20 polynomial cases, p in {{2, 3}} ({elapsed:.2f}s)"
    )


def test_criterion_02_modular_norm_sandwich_bulk():
    g = Grid.from_shape((0.0, 1.0), 64)
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    failures = 0
    above = below = 0
    for _ in range(1000):
        p = ExponentField.from_values(g, rng.uniform(1.1, 3.0, g.shape))
        scale = 10.0 ** rng.uniform(-2.0, 2.0)
        u = GridFunction(g, scale * rng.normal(size=g.shape))
        rep = check_modular_norm_relations(u, p, tolerance=1e-8)
        failures += rep.n_failed
        if modular(u, p) > 1.0:
            above += 1
        else:
            below += 1
    elapsed = time.perf_counter() - t0
    assert failures == 0
    assert above > 100 and below > 100  # both branches of the sandwich exercised
    assert elapsed < 10.0
    print(
        f"\n[criterion 2] PASS: 0 failures in 1000 random (u, p) cases, "
        f"{above} with modular > 1 and {below} below ({elapsed:.2f}s)"
    )


def test_criterion_03_strong_operator_agrees_with_divergence_form():
    cases = [
        (
            "1d quadratic, affine p",
            1,
            (0.0, 1.0),
            probe_preset("quadratic", 1, M=[[1.0]], b=(0.5,)),
            lambda X: 0.5 * X[..., 0] ** 2 + 0.5 * X[..., 0],
            ("affine", {"a": 2.2, "b": (0.4,)}),
            (0.25,),
        ),
        (
            "1d sine, sine-bump p",
            1,
            (0.0, 1.0),
            probe_preset("sine", 1, a=0.8, k=(2.0,), shift=0.3),
            lambda X: 0.8 * np.sin(2.0 * X[..., 0] + 0.3),
            ("sine-bump", {"base": 2.0, "amplitude": 0.5}),
            (0.25,),
        ),
        (
            "2d radial, affine p",
            2,
            ((0.0, 1.0), (0.0, 1.0)),
            probe_preset("radial", 2, a=1.0, m=3.0, center=(-0.2, -0.3)),
            lambda X: ((X[..., 0] + 0.2) ** 2 + (X[..., 1] + 0.3) ** 2) ** 1.5,
            ("affine", {"a": 2.0, "b": (0.5, 0.25)}),
            (0.5, 0.5),
        ),
    ]
    t0 = time.perf_counter()
    orders = []
    for label, ndim, bounds, probe, sample, (pname, pparams), x0 in cases:
        hs, errs = [], []
        for n in (33, 65, 129):
            g = Grid.from_shape(bounds, n if ndim == 1 else (n,) * ndim)
            p = build_exponent_field(exponent_expression(pname, pparams), g.bounds, g.h)
            u = GridFunction(g, sample(g.nodes()))
            x = np.array(x0)
            err = abs(divergence_flux_fd(u, p, x) - strong_operator(probe, x, p))
            hs.append(g.h)
            errs.append(err)
        order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        assert order >= 1.8, (label, order, errs)
        orders.append(order)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(
        "\n[criterion 3] PASS: fitted convergence orders "
        + ", ".join(f"{o:.2f}" for o in orders)
        + f" (>= 1.8 each) at h, h/2, h/4 ({elapsed:.2f}s)"
    )


def test_criterion_04_inf_convolution_suite():
    g = Grid.from_shape((-1.0, 1.0), 257)
    h = g.h
    X = g.axis_nodes(0)
    rng = np.random.default_rng(31)
    steps = rng.uniform(-0.8, 0.8, g.shape)
    family = {
        "|x|": GridFunction(g, np.abs(X)),
        "sine": GridFunction(g, 0.8 * np.sin(2.5 * X + 0.3)),
        "random-lipschitz": GridFunction(g, np.cumsum(steps) * h),
    }
    epsilons = (0.4, 0.2, 0.1, 0.05)
    t0 = time.perf_counter()
    for label, u in family.items():
        lip_u = u.lipschitz_constant()
        prev = None
        for eps in epsilons:
            res = inf_convolve(u, eps, q=2.0)
            ue = res.u_eps.values
            assert np.all(ue <= u.values + 1e-15), (label, eps, "dominance")
            if prev is not None:
                assert np.all(prev <= ue + 1e-15), (label, eps, "monotone in eps")
            prev = ue
            assert res.u_eps.lipschitz_constant() <= lip_u + 10.0 * h
            assert semiconcavity_check(res, tolerance=10.0 * h).all_passed
            # jet formula eta = (x - x_eps)|x - x_eps|^{q-2} / eps^{q-1}; at
            # q = 2 that is (x - x_eps)/eps, reproducible from the stored argmin
            manual = (g.nodes() - res.argmin_coords()) / eps
            for i in range(g.shape[0]):
                jet = jet_from_argmin(res, X[i])
                assert abs(jet.eta[0] - manual[i, 0]) <= 1e-13, (label, eps, i)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print(
        "\n[criterion 4] PASS: dominance, eps-monotonicity, Lipschitz bound, "
        "semiconcavity and exact argmin jets for 3 functions x 4 epsilons "
        f"at 257 nodes ({elapsed:.2f}s)"
    )


def test_criterion_05_reference_solves():
    g = Grid.from_shape((0.0, 1.0), 129)
    h = g.h
    X = g.axis_nodes(0)
    lines = []

    t0 = time.perf_counter()
    out2 = solve_variational(_const_p(g, 2.0), 0.0, f=1.0, tol=1e-10)
    err2 = float(np.max(np.abs(out2.u.values - X * (1.0 - X) / 2.0)))
    dt2 = time.perf_counter() - t0
    assert err2 <= 2.0 * h * h and dt2 < 10.0
    lines.append(f"p=2 torsion err {err2:.2e} <= 2h^2")

    t0 = time.perf_counter()
    out4 = solve_variational(_const_p(g, 4.0), 0.0, f=1.0, tol=1e-9)
    mid = 0.75 * 0.5 ** (4.0 / 3.0)
    err4 = abs(float(out4.u.values[64]) - mid)
    dt4 = time.perf_counter() - t0
    assert err4 <= 5.0 * h * h and dt4 < 10.0
    lines.append(f"p=4 midpoint err {err4:.2e} <= 5h^2")

    # -u'' + u = 0, u(0) = 1, u(1) = 2: u = cosh x + B sinh x
    bvals = np.zeros(g.shape)
    bvals[0], bvals[-1] = 1.0, 2.0
    t0 = time.perf_counter()
    fp = solve_fixed_point(
        _const_p(g, 2.0),
        GridFunction(g, bvals),
        source_preset("damping", coefficient=1.0, t_bound=3.0),
        tol=1e-8,
    )
    B = (2.0 - np.cosh(1.0)) / np.sinh(1.0)
    exact = np.cosh(X) + B * np.sinh(X)
    errf = float(np.max(np.abs(fp.u.values - exact)))
    dtf = time.perf_counter() - t0
    assert errf <= 5.0 * h * h and dtf < 10.0
    lines.append(f"fixed-point err {errf:.2e} <= 5h^2")

    print("\n[criterion 5] PASS: " + "; ".join(lines) + " at h = 1/128")


def test_criterion_06_solver_output_passes_both_checkers():
    f = source_preset("constant", value=1.0)
    margins = []
    for n in (33, 65, 129):
        g = Grid.from_shape((0.0, 1.0), n)
        h = g.h
        p = build_exponent_field(
            exponent_expression("sine-bump", {"base": 2.2, "amplitude": 0.6}),
            g.bounds,
            g.h,
        )
        out = solve_variational(p, 0.0, f=1.0, tol=1e-9)
        tol = 10.0 * h
        sup = check_weak_supersolution(out.u, p, f, side="super", tolerance=tol)
        sub = check_weak_supersolution(out.u, p, f, side="sub", tolerance=tol)
        vis = check_viscosity_supersolution(out.u, p, f, tolerance=tol)
        assert sup.all_passed and sub.all_passed and vis.all_passed, n
        worst = max(
            abs(rep.worst().margin) for rep in (sup, sub, vis) if rep.worst() is not None
        )
        assert worst <= tol, (n, worst)
        margins.append(worst)
    assert margins[0] > margins[1] > margins[2]  # tightens under refinement
    print(
        "\n[criterion 6] PASS: weak (both sides) and viscosity checks green at "
        "h = 1/32, 1/64, 1/128; binding margins "
        + " -> ".join(f"{m:.2e}" for m in margins)
        + " (each <= 10h, decreasing)"
    )


def test_criterion_07_pipeline_on_concave_parabola():
    g = Grid.from_shape((-1.0, 1.0), 129)
    h = g.h
    X = g.axis_nodes(0)
    u = GridFunction(g, 1.0 - X**2)
    p = _const_p(g, 2.0)
    rep, rows = pipeline_viscosity_to_weak(u, p, source_preset("zero"), (0.4, 0.2, 0.1, 0.05))
    assert rep.all_passed, rep.to_text()
    defects = [r["defect"] for r in rows]
    assert all(
        abs(a) >= abs(b) - 1e-12 for a, b in zip(defects, defects[1:])
    ), defects
    assert defects[-1] >= -10.0 * h
    sob = [r["sobolev_distance"] for r in rows]
    assert all(a > b for a, b in zip(sob, sob[1:])), sob
    print(
        "\n[criterion 7] PASS: pipeline report green; defects "
        + ", ".join(f"{d:.1e}" for d in defects)
        + f" (final >= -10h) and Sobolev distance {sob[0]:.3f} -> {sob[-1]:.3f} decreasing"
    )


def test_criterion_08_comparison_pairs_and_precondition_rejection():
    f0 = source_preset("zero")

    # (i) 1d, p = 3: u = (x+2)^2 and v = 18 - (x+2)^2 flank the same
    # boundary data on [0, 1] and order on every scanned box
    g = Grid.from_shape((0.0, 1.0), 65)
    X = g.axis_nodes(0)
    u = GridFunction(g, (X + 2.0) ** 2)
    v = GridFunction(g, 18.0 - (X + 2.0) ** 2)
    rep1, rows1 = comparison_shrinking_scan(u, v, _const_p(g, 3.0), f0, n_boxes=4)
    assert rows1 and all(r["passed"] for r in rows1), rows1

    # (ii) 1d, constant p = 2.5: affine u, v = u + 0.3 (both exact solutions)
    ua = GridFunction(g, 0.2 * X + 0.1)
    va = GridFunction(g, 0.2 * X + 0.4)
    rep2 = comparison_experiment(ua, va, _const_p(g, 2.5), f0)
    assert rep2.all_passed, rep2.to_text()

    # (iii) 2d, p = 2: u = xy harmonic, v = u + 0.2(2 - x^2 - y^2) a supersolution
    g2 = Grid.from_shape(((0.0, 1.0), (0.0, 1.0)), (33, 33))
    N = g2.nodes()
    xy = N[..., 0] * N[..., 1]
    u2 = GridFunction(g2, xy)
    v2 = GridFunction(g2, xy + 0.2 * (2.0 - N[..., 0] ** 2 - N[..., 1] ** 2))
    rep3 = comparison_experiment(u2, v2, _const_p(g2, 2.0), f0)
    assert rep3.all_passed, rep3.to_text()

    # constructed violation: constants with p = 3 > 2 have |Du| + |Dv| = 0
    uc = GridFunction(g, np.full(g.shape, 0.3))
    rep_bad = comparison_experiment(uc, uc.with_values(uc.values.copy()), _const_p(g, 3.0), f0)
    assert not rep_bad.all_passed
    grad_items = [it for it in rep_bad.items if "gradient hypothesis" in it.label]
    assert grad_items and not grad_items[0].passed
    assert any("not evaluated" in note for note in rep_bad.notes)
    print(
        "\n[criterion 8] PASS: 3 ordered pairs confirmed on every tested box; "
        "degenerate-gradient pair rejected by the precondition checker"
    )


def test_criterion_09_restoration_flow_on_step_fixture():
    image = read_pgm(os.path.join(FIXTURES, "step64.pgm"))
    p = build_exponent_from_image(image, sigma=1.2, k=3.0)
    t0 = time.perf_counter()
    res = evolve_flow(image, p, dt=0.2, steps=100)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0

    rises = np.diff(res.energy_trace)
    assert np.all(rises <= 1e-12), float(rises.max())

    before = image.to_function().values
    after = res.u.to_function().values
    left = np.s_[:, 4:28]
    right = np.s_[:, 36:60]
    ratio = max(
        float(np.var(after[left]) / np.var(before[left])),
        float(np.var(after[right]) / np.var(before[right])),
    )
    assert ratio <= 0.5, ratio

    def edge_col(vals):
        return int(np.argmax(np.abs(np.diff(vals.mean(axis=0)))))

    assert edge_col(before) == edge_col(after)
    assert not res.warned
    assert int(res.clamped_counts.sum()) == 0
    print(
        f"\n[criterion 9] PASS: energy non-increasing (max rise {rises.max():.1e}), "
        f"flat-zone variance ratio {ratio:.3f} <= 0.5, edge column pinned at "
        f"{edge_col(before)} after 100 steps ({elapsed:.2f}s)"
    )


def test_criterion_10_manifests_identical_across_worker_threads(tmp_path):
    configs = {
        "norm.cfg": "norm",
        "infconv.cfg": "infconv",
        "solve.cfg": "solve",
        "check_weak.cfg": "check-weak",
        "check_viscosity.cfg": "check-viscosity",
        "pipeline.cfg": "pipeline",
        "compare.cfg": "compare",
        "denoise.cfg": "denoise",
    }
    for name, command in configs.items():
        digests = []
        for threads in ("1", "4"):
            out = tmp_path / f"{name}.{threads}"
            env = dict(os.environ)
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                env[var] = threads
            proc = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "pxlaplace.cli",
                    command,
                    "--config",
                    os.path.join(FIXTURES, name),
                    "--output",
                    str(out),
                ],
                env=env,
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, (name, threads, proc.stderr)
            with open(out / "manifest.txt", "rb") as fh:
                digests.append(hashlib.sha256(fh.read()).hexdigest())
        assert digests[0] == digests[1], name
    print(
        "\n[criterion 10] PASS: manifest hashes identical at 1 and 4 worker "
        "threads for all 8 bundled configs"
    )
