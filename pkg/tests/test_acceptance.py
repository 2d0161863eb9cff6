"""One test per acceptance criterion, at the stated tolerances."""

import time

import numpy as np

from superforms.algebra import beta, factorial, wedge_power
from superforms.expr import parse_expression
from superforms.flow import initial_state, mcf_step, run_flow, volume_variation_check, weighted_mass
from superforms.manifold import (
    F_action_pair,
    d_supercurrent_pair,
    frame_residuals,
    supercurrent_pair,
)
from superforms.minimal import (
    brendle_hung_weight,
    default_test_suite,
    density,
    kernel_identity_check,
    localized_test_forms,
    mass_profile,
    minimality_residual,
    weighted_volume_bound,
)
from superforms.quadrature import Box
from superforms.shapes import catenoid, circle, circle3, crossing_planes, cylinder, helicoid, plane, sphere, torus
from superforms.suite import algebra_suite, integration_by_parts_check
from superforms.tropical import (
    QuasitropicalPolynomial,
    balancing_check,
    cell_complex,
    log_sum_exp,
    ma_measure_pl,
    ma_measure_smooth,
    multiplicities,
    random_quasitropical,
    reduce,
)
from superforms.tube import intrinsic_integral, tube_polynomial, tube_volume_direct, tube_volume_superform

RADII = (0.1, 0.2, 0.3)
FIT_RADII = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3)


def _volume_form(M):
    return wedge_power(beta(M.n), M.m) / factorial(M.m)


def test_algebra_suite(acceptance):
    start = time.perf_counter()
    checks = algebra_suite(seed=1, count=10_000)
    worst_pointwise = max(c.max_error for c in checks)
    total = sum(c.checks for c in checks)
    worst_ibp = 0.0
    for n in (1, 2, 3):
        for seed in range(3):
            for sharp in (False, True):
                lhs, rhs = integration_by_parts_check(n, seed, sharp=sharp)
                worst_ibp = max(worst_ibp, abs(lhs - rhs) / max(1.0, abs(rhs)))
    elapsed = time.perf_counter() - start
    ok = total >= 10_000 and worst_pointwise <= 1e-9 and worst_ibp <= 1e-9 and elapsed < 10
    acceptance(1, ok, f"{total} checks, pointwise {worst_pointwise:.2e}, by parts {worst_ibp:.2e}, {elapsed:.1f}s")
    assert ok


def test_kernel_identity(acceptance):
    worst = 0.0
    for n in range(2, 6):
        for p in range(0, 4):
            for delta in (1e-1, 1e-2):
                worst = max(worst, kernel_identity_check(n, p, delta, samples=1000, seed=n + 10 * p))
    ok = worst <= 1e-9
    acceptance(2, ok, f"max error {worst:.2e} over n <= 5, p <= 3")
    assert ok


def test_supercurrent_volumes(acceptance):
    start = time.perf_counter()
    cases = [
        (sphere(1.0), 4 * np.pi),
        (circle(1.5), 2 * np.pi * 1.5),
        (torus(2.0, 0.5), 4 * np.pi**2 * 2.0 * 0.5),
    ]
    errs = [abs(supercurrent_pair(M, _volume_form(M)) - ref) / ref for M, ref in cases]
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-4 and elapsed < 30
    acceptance(3, ok, f"relative errors {', '.join(f'{e:.1e}' for e in errs)}, {elapsed:.1f}s")
    assert ok


def test_weak_identity_and_frame_residuals(acceptance):
    worst = 0.0
    for M in (sphere(nodes=64), cylinder(nodes=64), catenoid(nodes=64)):
        M = M.with_frame("closed")
        r_d, r_sharp = frame_residuals(M)
        worst = max(worst, r_d, r_sharp)
        for psi in localized_test_forms(M, [(M.m - 1, M.m)], count=6, seed=5, width=0.15, margin=0.3):
            lhs, rhs = d_supercurrent_pair(M, psi), F_action_pair(M, psi)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = worst <= 1e-6
    acceptance(4, ok, f"max residual {worst:.2e} on sphere, cylinder, catenoid")
    assert ok


def test_minimality(acceptance):
    residuals = {}
    for name, M in (("catenoid", catenoid(nodes=48)), ("helicoid", helicoid(nodes=48))):
        residuals[name] = minimality_residual(M, default_test_suite(M, count=20, seed=3, margin=0.3)).residual
    S = sphere(nodes=64)
    mismatch = minimality_residual(S, default_test_suite(S, count=20, seed=3, margin=0.3)).mismatch
    ok = max(residuals.values()) <= 1e-4 and mismatch <= 1e-4
    detail = ", ".join(f"{k} {v:.1e}" for k, v in residuals.items())
    acceptance(5, ok, f"{detail}, sphere H-pairing gap {mismatch:.1e}")
    assert ok


def test_monotonicity_and_density(acceptance):
    radii = np.linspace(0.1, 0.8, 12)
    cat = mass_profile(catenoid(), [1.0, 0.0, 0.0], radii, method="clip")
    flat = mass_profile(plane(), [0.0, 0.0, 0.0], radii, method="clip")
    d_cat = density(catenoid(), [1.0, 0.0, 0.0]).value
    d_flat = density(plane(), [0.0, 0.0, 0.0]).value
    d_cross = density(crossing_planes(), [0.0, 0.0, 0.0]).value
    defect = max(cat.monotone_defect, flat.monotone_defect)
    ok = defect <= 1e-3 and abs(d_cat - np.pi) <= 1e-2 and abs(d_flat - np.pi) <= 1e-2 and abs(d_cross - 2 * np.pi) <= 1e-2
    acceptance(6, ok, f"defect {defect:.1e}, densities {d_cat:.5f} {d_flat:.5f} {d_cross:.5f}")
    assert ok


def test_weighted_volume_bound(acceptance):
    gaps = []
    ok = True
    for s in (0.0, 0.3, 0.6):
        a = np.array([s, 0.0, 0.0])
        normal = [1.0, 0.0, 0.0] if s else [0.0, 0.0, 1.0]
        M = plane(normal=normal, point=a, half_width=1.2, nodes=48)
        res = weighted_volume_bound(M, a, brendle_hung_weight(a, 2), seed=4)
        witness = np.pi * (1 - s * s)
        ok &= res.lhs >= witness - 1e-4 and res.lhs >= res.rhs - 1e-4
        ok &= abs(res.lhs - res.rhs) <= 1e-3 and abs(res.lhs - witness) <= 1e-3
        gaps.append(res.lhs - witness)
    acceptance(7, ok, "area - pi(1-|a|^2): " + ", ".join(f"{g:.1e}" for g in gaps))
    assert ok


def test_tropical(acceptance):
    rng = np.random.default_rng(8)
    worst_balance = 0.0
    for _ in range(100):
        phi = reduce(random_quasitropical(2, int(rng.integers(2, 9)), rng))
        cx = cell_complex(phi)
        worst_balance = max(worst_balance, balancing_check(cx, multiplicities(cx)))
    abs_sum = QuasitropicalPolynomial([[1, 1], [1, -1], [-1, 1], [-1, -1]], [0, 0, 0, 0])
    square = QuasitropicalPolynomial([[0, 0], [1, 0], [0, 1], [1, 1]], [0, 0, 0, 0])
    m_abs = sum(mass for _, mass in ma_measure_pl(abs_sum))
    m_square = sum(mass for _, mass in ma_measure_pl(square))
    smooth = ma_measure_smooth(log_sum_exp(square, 2.0), Box((-2.0, -2.0), (2.0, 2.0)), nodes=24)
    ok = worst_balance <= 1e-9 and abs(m_abs - 4) <= 1e-12 and abs(m_square - 1) <= 1e-12
    ok &= smooth.max_pointwise_error <= 1e-8
    acceptance(8, ok, f"balancing {worst_balance:.1e}, masses {m_abs:.15g} {m_square:.15g}, smooth {smooth.max_pointwise_error:.1e}")
    assert ok


def test_tube_routes(acceptance):
    start = time.perf_counter()
    cases = [
        (circle(1.0), lambda r: 4 * np.pi * r),
        (circle3(1.0), lambda r: 2 * np.pi**2 * r * r),
        (sphere(1.0), lambda r: 8 * np.pi * r + 8 * np.pi / 3 * r**3),
    ]
    worst_route, worst_fit, worst_odd = 0.0, 0.0, 0.0
    for M, exact in cases:
        P = tube_polynomial(M, FIT_RADII)
        worst_fit = max(worst_fit, P.fit_residual)
        if len(P.odd_coefficients):
            worst_odd = max(worst_odd, P.odd_ratio)
        for r in RADII:
            ref = exact(r)
            for v in (tube_volume_direct(M, r), tube_volume_superform(M, r), float(P(r))):
                worst_route = max(worst_route, abs(v - ref) / ref)
    i2, i3 = intrinsic_integral(circle(1.0), 0), intrinsic_integral(circle3(1.0), 0)
    elapsed = time.perf_counter() - start
    ok = worst_route <= 1e-3 and worst_fit <= 1e-3 and worst_odd <= 1e-3 and abs(i2 - i3) / abs(i2) <= 1e-3 and elapsed < 120
    acceptance(9, ok, f"routes {worst_route:.1e}, fit {worst_fit:.1e}, odd {worst_odd:.1e}, {elapsed:.1f}s")
    assert ok


def test_mean_curvature_flow(acceptance):
    S = sphere(nodes=32)
    lhs, rhs = volume_variation_check(S, 1.0)
    variation = max(abs(lhs - rhs) / abs(rhs), abs(rhs + 16 * np.pi) / (16 * np.pi))
    run = run_flow(S, h=1e-3, steps=50)
    exact = np.sqrt(1 - 4 * run.times)
    tracking = float(np.max(np.abs(run.radii - exact) / exact))
    u = parse_expression("x1^2 + x2^2 + x3^2", 3)
    state, masses = initial_state(S), []
    for _ in range(51):
        masses.append(weighted_mass(state, u))
        state = mcf_step(state, 1e-3)
    decreasing = bool(np.all(np.diff(masses) < 0))
    ok = variation <= 1e-3 and tracking <= 1e-3 and decreasing
    acceptance(10, ok, f"variation {variation:.1e}, radius {tracking:.1e}, weighted mass decreasing {decreasing}")
    assert ok
