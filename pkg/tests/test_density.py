import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treeanderson.density import (
    CertificateBreakdown,
    GridDensity,
    GridSpec,
    TailBound,
    cauchy_density,
    cauchy_grid,
    cauchy_project,
    combine_tails,
    density_fixed_point,
    density_step,
    grid_convolve,
    hyperbolic_tau,
    l1_distance,
    law_grid,
    law_tail,
    push_tail,
    pushforward_reciprocal,
    save_density,
    tail_certify,
    tail_step,
)
from treeanderson.disorder import ConfigurationError, DisorderLaw
from treeanderson.halfplane import EnergyPoint, free_green
from treeanderson.population import IterationConfig, init_pool, step_pool

GRID = GridSpec.symmetric(8.0)


def bump(grid, center, width, mass=1.0):
    """Compactly supported smooth bump (raised cosine) on the grid."""
    u = (grid.x - center) / width
    vals = np.where(np.abs(u) < 1, (1 + np.cos(np.pi * u)) / 2, 0.0)
    vals *= mass / np.trapezoid(vals, dx=grid.dx)
    return GridDensity(grid, vals)


# -- cauchy_density ---------------------------------------------------------

@pytest.mark.parametrize(
    "z, x, expected",
    [(1j, 0.0, 1 / math.pi), (1j, 1.0, 1 / (2 * math.pi)), (2 + 3j, 2.0, 0.1061032953945969)],
)
def test_cauchy_density_examples(z, x, expected):
    assert cauchy_density(z, x) == pytest.approx(expected, rel=1e-14)


def test_cauchy_grid_total_mass_is_one():
    for z in (1j, 0.3 + 0.01j, -5 + 2j):
        assert cauchy_grid(z, GRID).mass == pytest.approx(1.0, abs=1e-6)


def test_cauchy_grid_rejects_real_point():
    with pytest.raises(ValueError):
        cauchy_grid(1.0, GRID)


# -- grid and density containers ---------------------------------------------

def test_grid_spec_for_energy_width():
    assert GridSpec.for_energy(0.0).x_max == pytest.approx(8.0, abs=1e-2)
    assert GridSpec.for_energy(3.0).x_min == -16.0
    assert GridSpec.for_energy(0.0).n_points == 2**14


def test_grid_spec_zero_is_a_node():
    g = GridSpec.symmetric(8.0, 2**10)
    assert g.x[-g.offset] == 0.0


def test_grid_spec_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        GridSpec(-1.0, 0.1, 1000)


def test_grid_density_rejects_negative_values():
    g = GridSpec.symmetric(1.0, 16)
    with pytest.raises(ValueError):
        GridDensity(g, -np.ones(16))


def test_tail_bound_values_and_mass():
    t = TailBound(2.0, 1.0, 0.5)
    assert t(3.5) == pytest.approx(2.0 / 4.0)
    assert t(0.5) == math.inf
    assert t.mass_outside(-10.0, 10.0) == pytest.approx(2.0 / 8.5 + 2.0 / 9.5)
    with pytest.raises(ValueError):
        TailBound(-1.0)


def test_density_cdf_matches_cauchy_law():
    z = 0.5 + 0.7j
    f = cauchy_grid(z, GRID)
    exact = lambda y: 0.5 + math.atan((y - z.real) / z.imag) / math.pi  # noqa: E731
    assert f.cdf(GRID.x_min - 1) == pytest.approx(exact(GRID.x_min), abs=1e-12)
    assert f.cdf(GRID.x_max + 1) == pytest.approx(exact(GRID.x_max), abs=1e-8)
    assert f.cdf(0.5) == pytest.approx(0.5, abs=1e-6)


# -- cauchy_project -----------------------------------------------------------

def test_project_copies_of_i_is_sigma_i():
    f = cauchy_project(np.full(100, 1j), GRID)
    assert np.max(np.abs(f.values - cauchy_grid(1j, GRID).values)) < 1e-14


def test_project_matches_closed_form_mixture():
    f = cauchy_project(np.array([1j, -1 + 1j]), GRID)
    exact = 0.5 * (cauchy_density(1j, GRID.x) + cauchy_density(-1 + 1j, GRID.x))
    assert np.max(np.abs(f.values - exact)) <= 1e-12
    assert f.mass == pytest.approx(1.0, abs=1e-6)


def test_project_tail_model_dominates_exterior():
    rng = np.random.default_rng(3)
    g = rng.normal(0.5, 0.3, 500) + 1j * rng.uniform(0.1, 1.0, 500)
    f = cauchy_project(g, GRID, beta=0.05)
    y = np.concatenate([GRID.x_max + np.geomspace(1e-3, 1e4, 200), GRID.x_min - np.geomspace(1e-3, 1e4, 200)])
    exact = np.mean(cauchy_density(g[:, None], y[None, :]), axis=0)
    assert np.all(exact <= f.tail(y) * (1 + 1e-6))


def test_project_barycenter_off_grid_is_error():
    with pytest.raises(ConfigurationError):
        cauchy_project(np.full(10, 20 + 1j), GRID)


def test_project_semigroup_over_random_points():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        z = complex(rng.uniform(-2, 2), rng.uniform(0.05, 2))
        w = complex(rng.uniform(-2, 2), rng.uniform(0.05, 2))
        conv = grid_convolve(cauchy_project(np.array([z]), GRID), cauchy_grid(w, GRID))
        worst = max(worst, l1_distance(conv, cauchy_grid(z + w, GRID)))
    assert worst <= 1e-3


# -- grid_convolve ------------------------------------------------------------

def test_convolve_with_delta_is_identity():
    g = GridSpec.symmetric(4.0, 2**12)
    f = bump(g, 0.3, 0.5)
    delta = law_grid(DisorderLaw.free(), g)
    assert l1_distance(grid_convolve(f, delta), f) < 1e-12


def test_convolve_sigma_i_twice_is_sigma_2i():
    assert l1_distance(grid_convolve(cauchy_grid(1j, GRID), cauchy_grid(1j, GRID)), cauchy_grid(2j, GRID)) <= 1e-3


def test_convolve_uniforms_gives_triangle():
    u = law_grid(DisorderLaw.uniform(1.0), GRID)
    t = grid_convolve(u, u)
    triangle = np.clip((2 - np.abs(GRID.x)) / 4, 0, None)
    # cell averaging smears each kink over one cell
    assert np.max(np.abs(t.values - triangle)) <= GRID.dx / 2
    assert t.mass == pytest.approx(1.0, abs=1e-12)


def test_convolve_commutative_and_associative():
    g = GridSpec.symmetric(4.0, 2**12)
    a, b, c = bump(g, -0.5, 0.4), bump(g, 0.2, 0.7), bump(g, 0.4, 0.3)
    assert l1_distance(grid_convolve(a, b), grid_convolve(b, a)) <= 1e-10
    left = grid_convolve(grid_convolve(a, b), c)
    right = grid_convolve(a, grid_convolve(b, c))
    assert l1_distance(left, right) <= 1e-10


def test_convolve_grid_mismatch_is_error():
    with pytest.raises(ValueError):
        grid_convolve(cauchy_grid(1j, GRID), cauchy_grid(1j, GridSpec.symmetric(4.0)))


# -- pushforward_reciprocal --------------------------------------------------

def test_pushforward_preserves_sigma_i_at_zero_energy():
    v = pushforward_reciprocal(cauchy_grid(1j, GRID), 0.0)
    assert l1_distance(v, cauchy_grid(1j, GRID)) <= 1e-3


def test_pushforward_maps_cauchy_to_cauchy():
    z, E = 0.5 + 0.3j, 1.0
    v = pushforward_reciprocal(cauchy_grid(z, GRID), E)
    assert l1_distance(v, cauchy_grid(-1 / (z + E), GRID)) <= 1e-3


def test_pushforward_moves_bump_to_preimage():
    w0, E = -0.4, 0.5
    f = bump(GRID, -1 / w0 - E, 0.02)
    v = pushforward_reciprocal(f, E)
    mean = np.trapezoid(GRID.x * v.values, dx=GRID.dx) / v.grid_mass
    assert mean == pytest.approx(w0, abs=1e-4)
    assert GRID.x[np.argmax(v.values)] == pytest.approx(w0, abs=5 * GRID.dx)


def test_pushforward_conserves_mass_of_random_mixtures():
    rng = np.random.default_rng(5)
    for _ in range(8):
        E = rng.uniform(-3, 3)
        re = rng.uniform(-3, 3, 20)
        # the image of a component has width Im g / |g + E|**2; keep it >= 10 cells
        floor = 10 * GRID.dx * ((re + E) ** 2 + 4)
        g = re + 1j * np.maximum(np.exp(rng.uniform(np.log(0.02), np.log(2), 20)), floor)
        f = cauchy_project(g, GRID)
        assert abs(pushforward_reciprocal(f, E).mass - 1) <= 1e-4


def test_pushforward_without_tail_model_is_error():
    g = GridSpec.symmetric(1.0, 64)
    f = GridDensity(g, np.ones(64) * 0.4, None, 0.2)
    with pytest.raises(ConfigurationError):
        pushforward_reciprocal(f, 0.0)


# -- density_step -------------------------------------------------------------

@pytest.mark.parametrize("law", [DisorderLaw.free(), DisorderLaw.spike(1.0)], ids=["free", "sharp-atom"])
@pytest.mark.parametrize("E, eta", [(0.0, 0.05), (1.0, 0.1), (2.5, 0.05)])
def test_density_step_sharp_disorder_fixes_free_cauchy(law, E, eta):
    energy = EnergyPoint(E, eta, 2)
    grid = GridSpec.for_energy(E)
    f = cauchy_grid(complex(free_green(energy.z, 2)), grid)
    assert l1_distance(density_step(f, law, energy), f) <= 5e-3


def test_density_step_mass_drift():
    law = DisorderLaw.uniform(0.05)
    energy = EnergyPoint(0.5, 0.05, 2)
    f = cauchy_grid(0.3 + 0.5j, GRID)
    total = 0.0
    for _ in range(100):
        g = density_step(f, law, energy, normalize=False)
        assert abs(g.mass - 1) <= 1e-4
        total += g.mass - 1
        f = g.normalized()
    assert abs(total) <= 1e-2


def test_density_step_output_normalized():
    f = density_step(cauchy_grid(1j, GRID), DisorderLaw.uniform(0.3), EnergyPoint(0.7, 0.05, 2))
    assert f.mass == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 5, 20])
def test_density_step_agrees_with_population_backend(n):
    energy = EnergyPoint(0.5, 0.1, 2)
    law = DisorderLaw.uniform(0.05)
    cfg = IterationConfig(energy, law, pool_size=40_000, seed=8)
    pool = init_pool("free", cfg)
    f = cauchy_project(pool, GRID, beta=0.05)
    for _ in range(n):
        pool = step_pool(pool, cfg)
        f = density_step(f, law, energy)
    assert l1_distance(f, cauchy_project(pool, GRID, beta=0.05)) <= 1e-2


def test_density_step_one_step_tail_is_certified():
    beta, E, K, eta = 1e-3, 3.0, 2, 1e-7
    w = float(np.real(free_green(E, K)))
    grid = GridSpec.symmetric(2.0, 2**15)
    f0 = cauchy_grid(w + 1j * beta * w * w, grid)
    law = DisorderLaw.uniform(beta)
    seed = TailBound(beta**0.75 * w * w, beta**0.25 * abs(w), w)
    # the starting density obeys the seed bound
    u = np.abs(grid.x - w) - seed.r
    assert np.all(f0.values[u > 0] <= seed(grid.x[u > 0]))
    f1 = density_step(f0, law, EnergyPoint(E, eta, K))
    cert = tail_step([seed] * K + [law_tail(law), TailBound(eta / np.pi)], math.sqrt(beta) * w * w, w, K)
    far = np.abs(grid.x - w) > 1.1 * cert.r
    assert np.all(f1.values[far] <= 1.05 * cert(grid.x[far]))


def test_density_fixed_point_converges_at_zero_disorder():
    energy = EnergyPoint(1.0, 0.1, 2)
    f0 = cauchy_grid(1j, GridSpec.symmetric(8.0, 2**12))
    f, trace = density_fixed_point(f0, DisorderLaw.free(), energy, max_steps=400, tol=1e-6)
    assert trace.converged
    target = cauchy_grid(complex(free_green(energy.z, 2)), f.grid)
    assert l1_distance(f, target) <= 5e-3


# -- tail calculus ------------------------------------------------------------

def test_combine_tails_example():
    c = combine_tails(TailBound(1.0, 0.0), TailBound(1.0, 0.0), 1.0)
    assert (c.s, c.r) == (10.0, 1.0)


def test_hyperbolic_tau_example():
    assert hyperbolic_tau(-0.5, 0.1) == pytest.approx(0.25 / 0.9025, rel=1e-14)
    assert hyperbolic_tau(-0.5, 0.1) == pytest.approx(0.27701, abs=5e-6)


def test_push_tail_example():
    out = push_tail(TailBound(1.0, 0.1, -1.0), -0.5)
    assert out.s == pytest.approx(0.27701, abs=5e-6)
    assert out.r == pytest.approx(0.027701, abs=5e-7)
    assert out.center == -0.5


def test_tau_breakdown():
    with pytest.raises(CertificateBreakdown):
        hyperbolic_tau(-0.5, 2.0)


def test_tail_step_requires_matching_center_and_positive_t():
    tails = [TailBound(0.1, 0.01, -0.5)] * 2 + [TailBound(0.0, 0.01)]
    tail_step(tails, 0.1, -0.5, 2)
    with pytest.raises(ValueError):
        tail_step(tails, 0.1, -0.4, 2)
    with pytest.raises(ValueError):
        tail_step(tails, 0.0, -0.5, 2)


small = st.floats(0.0, 0.05)


@settings(max_examples=200, deadline=None)
@given(s1=small, r1=small, s2=small, r2=small, ds=small, dr=small, which=st.integers(0, 3))
def test_tail_step_monotone(s1, r1, s2, r2, ds, dr, which):
    w, K, t = -0.5, 2, 0.05
    base = [s1, r1, s2, r2]
    bumped = list(base)
    bumped[which] += ds if which % 2 == 0 else dr

    def run(p):
        tails = [TailBound(p[0], p[1], w)] * K + [TailBound(p[2], p[3], 0.0)]
        return tail_step(tails, t, w, K)

    a, b = run(base), run(bumped)
    assert b.s >= a.s * (1 - 1e-12)
    assert b.r >= a.r * (1 - 1e-12)


def test_certificate_closes_with_measured_tails():
    beta, eta = 1e-4, 1e-9
    law = DisorderLaw.uniform(beta)
    rep = tail_certify(EnergyPoint(3.0, eta, 2), beta, law_tail(law), TailBound(eta / np.pi), 50)
    assert rep.closes and not rep.breakdown
    assert rep.first_failing_step is None
    assert len(rep.s) == 51
    assert max(rep.s) <= rep.s0 and max(rep.r) <= rep.r0
    assert rep.bound == pytest.approx(2 * rep.s[-1] / rep.r0 * 4)


def test_certificate_with_padded_potential_tail_needs_wider_t():
    # (2 beta, beta) for the potential: the default t = beta**(1/2) w**2
    # leaves too little room at beta = 1e-4, four times that closes
    beta, w = 1e-4, -0.5
    args = (EnergyPoint(3.0, 1e-9, 2), beta, TailBound(2 * beta, beta), TailBound(2 * beta**2, beta**2), 50)
    default = tail_certify(*args)
    assert not default.closes and default.first_failing_step == 1
    wide = tail_certify(*args, t=4 * math.sqrt(beta) * w * w)
    assert wide.closes
    assert tail_certify(args[0], 1e-6, TailBound(2e-6, 1e-6), TailBound(2e-12, 1e-12), 50).closes


def test_certificate_fails_at_parabolic_edge():
    beta = 1e-4
    rep = tail_certify(
        EnergyPoint(2 * math.sqrt(2), 1e-9, 2), beta, TailBound(2 * beta, beta), TailBound(2 * beta**2, beta**2), 50
    )
    assert not rep.closes
    assert rep.first_failing_step is not None
    assert rep.bound is None


def test_certificate_trivial_without_disorder():
    rep = tail_certify(EnergyPoint(3.0, 1e-9, 2), 0.0, TailBound(0.0), TailBound(0.0))
    assert rep.closes and rep.s0 == 0.0 and rep.r0 == 0.0


def test_certificate_rejects_band_energy():
    with pytest.raises(ValueError):
        tail_certify(EnergyPoint(1.0, 1e-9, 2), 1e-4, TailBound(0.0), TailBound(0.0))


def test_certificate_report_dict_is_json():
    rep = tail_certify(EnergyPoint(3.0, 1e-9, 2), 1e-4, TailBound(2e-4, 1e-4), TailBound(2e-8, 1e-8))
    d = rep.as_dict()
    assert d["s_final"] == rep.s[-1]
    json.dumps({k: float(v) if isinstance(v, np.floating) else v for k, v in d.items()})


# -- export -----------------------------------------------------------------

def test_save_density_round_trip(tmp_path):
    f = cauchy_grid(0.2 + 0.4j, GridSpec.symmetric(4.0, 256))
    path, meta = save_density(f, tmp_path / "f.txt")
    data = np.loadtxt(path)
    assert np.allclose(data[:, 0], f.x, rtol=0, atol=1e-10)
    assert np.allclose(data[:, 1], f.values, rtol=1e-11)
    desc = json.loads(meta.read_text())
    assert desc["center"] == pytest.approx(0.2)
    assert desc["s"] == pytest.approx(0.4 / math.pi)
    assert desc["tail_mass"] == pytest.approx(f.tail_mass)
