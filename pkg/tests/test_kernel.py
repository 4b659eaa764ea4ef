import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from dgbalance.errors import ConfigurationError, DivergenceError, DomainError
from dgbalance.kernel import quadrature
from dgbalance.kernel.basis import MAX_DEGREE, build_basis, modal_values, n_modes, volume_rule
from dgbalance.kernel.lserk import CK45, EULER, LserkScheme, get_scheme
from dgbalance.kernel.modal import modal_project, modal_reconstruct
from dgbalance.kernel.operator import (
    AdvectionSetup, LocalDiscretization, advance_timestep, element_length_scale, stable_dt,
)
from dgbalance.mesh import ElementType, generate_box_mesh, split_to_mixed
from dgbalance.timing import Category, TimerSet

from conftest import advect, sine_wave

ALL = list(ElementType)
MODAL = [t for t in ElementType if t.is_modal]


def _exact(etype, f):
    # independent adaptive integration over the reference element
    g = lambda z, y, x: f(x, y, z)
    if etype is ElementType.HEX:
        return integrate.tplquad(g, -1, 1, -1, 1, -1, 1)[0]
    if etype is ElementType.TET:
        return integrate.tplquad(g, -1, 1, -1, lambda x: -x, -1, lambda x, y: -1 - x - y)[0]
    if etype is ElementType.PRISM:
        return integrate.tplquad(g, -1, 1, -1, lambda x: -x, -1, 1)[0]
    h = lambda z, y, x: f(x, y, z)
    # pyramid: integrate x, y over the shrinking square at height z
    return integrate.tplquad(lambda x, y, z: h(z, y, x), -1, 1, lambda z: -(1 - z) / 2, lambda z: (1 - z) / 2,
                             lambda z, y: -(1 - z) / 2, lambda z, y: (1 - z) / 2)[0]


@pytest.mark.parametrize("etype", ALL)
@pytest.mark.parametrize("powers", [(0, 0, 0), (2, 0, 1), (1, 3, 0), (2, 2, 1)])
def test_volume_rules_match_adaptive_integration(etype, powers):
    i, j, k = powers
    pts, w = volume_rule(etype, 4)   # exact to total degree 7 in each collapsed direction
    approx = np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j * pts[:, 2] ** k)
    assert approx == pytest.approx(_exact(etype, lambda x, y, z: x ** i * y ** j * z ** k), abs=1e-10)


def test_face_rules_are_normalised():
    _, w = quadrature.quad_face_rule(3)
    assert w.sum() == pytest.approx(1.0)
    bary, w = quadrature.tri_face_rule(3)
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(bary.sum(axis=1), 1.0)
    # mean of l1^2 over a triangle is 1/6
    assert np.sum(w * bary[:, 1] ** 2) == pytest.approx(1 / 6)


@pytest.mark.parametrize("etype", ALL)
@pytest.mark.parametrize("N", [0, 1, 3])
def test_modes_orthonormal(etype, N):
    pts, w = volume_rule(etype, N + 3)
    phi = modal_values(etype, N, pts)
    assert phi.shape[1] == n_modes(etype, N)
    np.testing.assert_allclose(phi.T @ (w[:, None] * phi), np.eye(phi.shape[1]), atol=1e-11)


def test_hex_n0_basis():
    b = build_basis(ElementType.HEX, 0)
    np.testing.assert_array_equal(b.V, [[1.0]])
    assert b.weights[0] == pytest.approx(8.0)


def test_tet_n2_conditioning():
    b = build_basis(ElementType.TET, 2)
    c = np.linalg.cond(b.V)
    assert np.isfinite(c) and c < 1e6
    assert c == pytest.approx(4.34, abs=0.01)


@pytest.mark.parametrize("etype", ALL)
@pytest.mark.parametrize("N", range(0, 6))
def test_basis_invariants(etype, N):
    b = build_basis(etype, N)
    M = b.V.T @ b.W @ b.V
    np.testing.assert_allclose(M, M.T, atol=1e-13, rtol=0)
    np.testing.assert_allclose(b.reference_mass, M, atol=1e-12)
    assert np.linalg.matrix_rank(b.V) == b.n_modes == b.n_nodes
    assert np.all(b.weights > 0)
    assert np.all(np.linalg.eigvalsh(M) > 0)
    assert b.weights.sum() == pytest.approx(etype.ref_volume)


@pytest.mark.parametrize("N", [0, 1, 2, 3, 4, 5])
def test_node_counts(N):
    counts = [build_basis(t, N).n_nodes for t in ElementType]
    assert counts[0] == (N + 1) ** 3
    assert counts[1] == counts[3] == (N + 1) * (N + 2) * (N + 3) // 6
    assert counts[2] == (N + 1) ** 2 * (N + 2) // 2


def test_hex_modal_option():
    b = build_basis(ElementType.HEX, 2, modal_hex=True)
    assert not b.nodal
    assert np.linalg.matrix_rank(b.V) == 27
    assert build_basis(ElementType.HEX, 2).nodal


@pytest.mark.parametrize("N", [-1, MAX_DEGREE + 1])
def test_unsupported_degree(N):
    with pytest.raises(ConfigurationError):
        build_basis(ElementType.TET, N)


# ------------------------------------------------------------------ modal

@pytest.mark.parametrize("etype", MODAL)
def test_project_zero_and_pure_modes(etype):
    b = build_basis(etype, 3)
    assert np.all(modal_project(np.zeros((1, b.n_nodes)), b, 1.3) == 0)
    for k in range(b.n_modes):
        e = np.zeros(b.n_modes)
        e[k] = 1
        got = modal_project((b.V @ e)[None], b, 0.7)[0]
        np.testing.assert_allclose(got, e, atol=1e-10)
        np.testing.assert_allclose(modal_reconstruct(e, b), b.V[:, k], atol=0)


@pytest.mark.parametrize("etype", MODAL)
def test_project_matches_dense_solve(etype, rng):
    b = build_basis(etype, 4)
    q = rng.standard_normal((3, 2, b.n_nodes))
    J = np.array([0.1, 1.0, 7.5])
    got = modal_project(q, b, J)
    for e in range(3):
        M = b.V.T @ np.diag(b.weights * J[e]) @ b.V
        want = np.linalg.solve(M, b.V.T @ np.diag(b.weights * J[e]) @ q[e].T).T
        np.testing.assert_allclose(got[e], want, atol=1e-10)
        np.testing.assert_allclose(modal_reconstruct(got[e], b), q[e], atol=1e-10)


def test_project_rejects_nonpositive_jacobian():
    b = build_basis(ElementType.TET, 1)
    with pytest.raises(DomainError):
        modal_project(np.ones((2, 1, 4)), b, [1.0, 0.0])


@given(etype=st.sampled_from(ALL), N=st.integers(0, 5), J=st.floats(1e-3, 1e3),
       seed=st.integers(0, 2 ** 32 - 1))
def test_roundtrip_and_idempotence(etype, N, J, seed):
    b = build_basis(etype, N)
    r = np.random.default_rng(seed)
    q = r.standard_normal((2, b.n_nodes)) * 10
    qt = modal_project(q, b, J)
    np.testing.assert_allclose(modal_reconstruct(qt, b), q, atol=1e-10 * max(1, np.abs(q).max()))
    c = r.standard_normal((2, b.n_modes))
    np.testing.assert_allclose(modal_project(modal_reconstruct(c, b), b, J), c, atol=1e-10)


# ------------------------------------------------------------------ LSERK

def _ode_error(scheme, n):
    # damped oscillator u' = A u with exact solution expm(A T) u0
    A = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    T = 1.0
    u, dt = np.array([1.0, 0.0]), T / n
    for i in range(n):
        u = scheme.step(u, i * dt, dt, lambda v, t: A @ v)
    exact = np.exp(-T) * np.array([np.cos(2 * T), -np.sin(2 * T)])
    return np.abs(u - exact).max()


@pytest.mark.parametrize("scheme", [CK45, EULER])
def test_design_order_on_linear_ode(scheme):
    ns = [10, 20, 40, 80]
    errs = [_ode_error(scheme, n) for n in ns]
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope - scheme.order) < 0.2


def test_ck45_consistency():
    # sum of effective weights is one and c matches the stage times
    assert CK45.n_stages == 5
    u = CK45.step(np.array([0.0]), 0.0, 0.5, lambda v, t: np.ones_like(v))
    assert u[0] == pytest.approx(0.5, abs=1e-14)
    u = CK45.step(np.array([0.0]), 0.0, 1.0, lambda v, t: np.full_like(v, t))
    assert u[0] == pytest.approx(0.5, abs=1e-14)


def test_scheme_lookup():
    assert get_scheme("ck45") is CK45
    with pytest.raises(ValueError):
        get_scheme("rk99")
    with pytest.raises(ValueError):
        LserkScheme("bad", (0.5,), (1.0,), (0.0,), 1)


# --------------------------------------------------------------- operator

def test_volume_kernel_linear_hex_n1():
    # q = x on the unit cube, a = (1,0,0).  On [-1,1] the Gauss nodes are
    # +-1/sqrt(3); l_0' = -sqrt(3)/2, q = (1 + xi)/2, d xi/dx = 2, so
    # r_i = 2 * (1/w_i) * int l_i' q dxi = -+sqrt(3).
    m = generate_box_mesh(1, 1, 1)
    d = LocalDiscretization(m, AdvectionSetup(N=1, velocity=(1.0, 0.0, 0.0)))
    d.interpolate(lambda x: x[:, 0][None])
    r = d.volume_kernel(d.state)[ElementType.HEX].reshape(-1)
    x = d.node_coordinates(ElementType.HEX)[0, :, 0]
    np.testing.assert_allclose(r, np.where(x > 0.5, np.sqrt(3), -np.sqrt(3)), atol=1e-13)


def test_zero_velocity_zero_residual(mixed4):
    d = LocalDiscretization(mixed4, AdvectionSetup(N=2, velocity=(0.0, 0.0, 0.0)))
    d.interpolate(lambda x: np.sin(7 * x).sum(axis=1)[None])
    R = d.residual(dict(d.state), TimerSet(active=False))
    assert all(np.all(r == 0) for r in R.values())


def test_upwind_picks_master():
    m = generate_box_mesh(2, 1, 1)
    d = LocalDiscretization(m, AdvectionSetup(N=1, velocity=(1.0, 0.0, 0.0)))
    d.interpolate(lambda x: (x[:, 0] > 0.5).astype(float)[None])
    d.compute_traces(d.state)
    k = [i for i, s in enumerate(d.side_ids) if abs(d.an[i]) > 0]
    assert k
    for i in k:
        side = m.sides[d.side_ids[i]]
        if d.an[i] > 0:
            assert d.upwind_role[i] == 0
        else:
            assert d.upwind_role[i] == 1
        assert side.master_elem == min(side.neighbor_elems)
    # both x-sides separate the same pair; the one with a.n > 0 seen from the master carries
    # the jump [0, 1] and must take the master value
    jump = [i for i in k if d.an[i] > 0 and np.allclose(d.trace[i, 0], 0) and np.allclose(d.trace[i, 1], 1)]
    assert len(jump) == 1
    i = jump[0]
    assert np.array_equal(d.trace[i, d.upwind_role[i]], d.trace[i, 0])


def _single_type(etype):
    base = generate_box_mesh(2, 2, 2)
    if etype is ElementType.HEX:
        return base
    return split_to_mixed(base, 1.0, {etype.name.lower(): 1})


@pytest.mark.parametrize("etype", ALL)
def test_free_stream_every_type(etype):
    mesh = _single_type(etype)
    assert {k for k, v in mesh.counts_by_type().items() if v} == {etype.name}
    setup = AdvectionSetup(N=3)
    d = advect(mesh, setup, stable_dt(mesh, setup), 100 * stable_dt(mesh, setup), lambda x: np.full((1, len(x)), 2.5))
    for q in d.state.values():
        assert np.abs(q - 2.5).max() < 1e-12


def test_conservation_mixed(mixed4):
    setup = AdvectionSetup(N=3)
    d = LocalDiscretization(mixed4, setup)
    d.interpolate(sine_wave(setup.velocity))
    d.state = {k: v + 1.0 for k, v in d.state.items()}
    m0 = d.total_integral()
    assert m0[0] == pytest.approx(1.0, abs=1e-3)   # interpolation error only
    dt = stable_dt(mixed4, setup)
    for step in range(1, 21):
        advance_timestep(d, dt, step=step)
    assert abs(d.total_integral()[0] - m0[0]) < 1e-10


def test_spatial_order_hex():
    setup = AdvectionSetup(N=3)
    T = 0.1
    errs = []
    for n in (2, 4):
        mesh = generate_box_mesh(n, n, n)
        dt = stable_dt(generate_box_mesh(4, 4, 4), setup) / 4
        dt = T / int(np.ceil(T / dt))
        d = advect(mesh, setup, dt, T, sine_wave(setup.velocity))
        x = d.node_coordinates(ElementType.HEX).reshape(-1, 3)
        exact = sine_wave(setup.velocity, T)(x)[0]
        errs.append(np.sqrt(np.mean((d.state[ElementType.HEX].reshape(-1) - exact) ** 2)))
    assert abs(np.log2(errs[0] / errs[1]) - (setup.N + 1)) < 0.2


def test_pure_hex_has_no_modal_time():
    m = generate_box_mesh(2, 2, 2)
    d = LocalDiscretization(m, AdvectionSetup(N=2))
    d.interpolate(sine_wave((1, 0.5, 0.25)))
    t = advance_timestep(d, 1e-3, TimerSet(active=True))
    assert t.totals[Category.DG_MODAL] == 0.0
    assert t.totals[Category.DG_ELEMS] > 0 and t.totals[Category.DG_SIDES] > 0
    assert (t.n_elems, t.n_modal_elems) == (8, 0)


def test_modal_time_recorded_on_mixed(mixed4):
    d = LocalDiscretization(mixed4, AdvectionSetup(N=2))
    t = advance_timestep(d, 1e-3, TimerSet(active=True))
    assert t.totals[Category.DG_MODAL] > 0
    assert t.n_modal_elems == int(mixed4.modal_flags.sum())


def test_divergence_reports_step(mixed4):
    setup = AdvectionSetup(N=2)
    d = LocalDiscretization(mixed4, setup)
    d.interpolate(sine_wave(setup.velocity))
    dt = 50 * stable_dt(mixed4, setup)
    with pytest.raises(DivergenceError) as info:
        for step in range(1, 500):
            advance_timestep(d, dt, step=step)
    assert info.value.step == step


def test_nan_state_diverges():
    d = LocalDiscretization(generate_box_mesh(1, 1, 1), AdvectionSetup(N=1))
    d.state[ElementType.HEX][0, 0, 0, 0, 0] = np.nan
    with pytest.raises(DivergenceError):
        advance_timestep(d, 1e-3, step=7)


def test_dt_must_be_positive():
    d = LocalDiscretization(generate_box_mesh(1, 1, 1), AdvectionSetup(N=1))
    with pytest.raises(ValueError):
        advance_timestep(d, 0.0)


def test_deterministic_and_partition_local(mixed4):
    setup = AdvectionSetup(N=2)
    init = sine_wave(setup.velocity)
    a = advect(mixed4, setup, 1e-3, 5e-3, init).get_state()
    b = advect(mixed4, setup, 1e-3, 5e-3, init).get_state()
    assert a.tobytes() == b.tobytes()


def test_state_slots_roundtrip(mixed4):
    d = LocalDiscretization(mixed4, AdvectionSetup(N=2, n_var=2))
    d.interpolate(lambda x: np.stack([x[:, 0], x[:, 1] * x[:, 2]]))
    U = d.get_state()
    assert U.shape == (mixed4.n_elems, 2, 27)
    e = LocalDiscretization(mixed4, AdvectionSetup(N=2, n_var=2))
    e.set_state(U)
    assert all(np.array_equal(e.state[t], d.state[t]) for t in d.state)
    with pytest.raises(ValueError):
        e.set_state(U[:, :1])


def test_stable_dt_formula():
    m = generate_box_mesh(4, 4, 4)
    s = AdvectionSetup(N=3, velocity=(3.0, 0.0, 4.0))
    # cube of side 1/4: 6V/A = 6 h^3 / (6 h^2) = h
    np.testing.assert_allclose(element_length_scale(m), 0.25)
    assert stable_dt(m, s, cfl=0.5) == pytest.approx(0.5 * 0.25 / (5 * 16))
    assert stable_dt(m, AdvectionSetup(velocity=(0, 0, 0))) == np.inf
