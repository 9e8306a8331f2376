import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiberplast.analysis import coercivity_constant
from fiberplast.energy import (
    DiscreteModel,
    State,
    dissipation,
    grad_u_energy,
    grad_z_smooth,
    load_work,
    local_energy,
    nonlocal_energy,
    power,
    support_difference_matrices,
    total_energy,
)
from fiberplast.fibers import FiberGraph, FiberParams, sample_fiber_graph
from fiberplast.lattice import Box, Lattice, LatticeField
from fiberplast.loads import LoadPath, load_profile, time_scaling
from fiberplast.material import FrobeniusDissipation, MaterialTensors, Tensor4, project_sym0, quadratic_form

from helpers import plate_model

MAT2 = MaterialTensors(Tensor4.isotropic(2, 1.0, 1.5), Tensor4.identity(2, 5.0), 0.2)


def _sym0_field(lat, rng, mask=None):
    a, b = rng.standard_normal((2,) + lat.shape)
    Z = np.stack([np.stack([a, b], -1), np.stack([b, -a], -1)], -2)
    if mask is not None:
        Z = Z * mask[..., None, None]
    return LatticeField(lat, Z)


def _naive_total(t, u, z, material, graph, amplitude):
    """Loop-based energy on a 2-D lattice with the axis ramp load ``amplitude * x_0 * e_1``."""
    lat = u.lattice
    eps, w, n = lat.eps, lat.cell_volume, lat.shape
    A, H, kap = material.A, material.H, material.kappa

    def U(i, j):
        return u.values[i, j] if 0 <= i < n[0] and 0 <= j < n[1] else np.zeros(2)

    def Z(i, j):
        return z.values[i, j] if 0 <= i < n[0] and 0 <= j < n[1] else np.zeros((2, 2))

    el = grad = 0.0
    for i in range(-1, n[0]):
        for j in range(-1, n[1]):
            G = np.zeros((2, 2))
            G[:, 0] = (U(i + 1, j) - U(i, j)) / eps
            G[:, 1] = (U(i, j + 1) - U(i, j)) / eps
            e = 0.5 * (G + G.T) - Z(i, j)
            el += w * float(quadratic_form(A, e))
            for nb in (Z(i + 1, j), Z(i, j + 1)):
                grad += w * kap * float(np.sum(((nb - Z(i, j)) / eps) ** 2))
    hard = sum(w * float(quadratic_form(H, z.values[i, j])) for i in range(n[0]) for j in range(n[1]))
    ev = 0.0
    x = lat.coords
    uf = u.flat()
    edges = graph.edge_set()
    prm = graph.params
    for a in range(lat.num_nodes):
        for b in range(lat.num_nodes):
            if a == b or (min(a, b), max(a, b)) not in edges:
                continue
            r = np.linalg.norm(x[a] - x[b])
            sigma = (r / eps) ** prm.exponent
            proj = abs(np.dot(uf[a] - uf[b], (x[a] - x[b]) / r))
            ev += eps ** (2 * lat.d) * sigma * proj**prm.p / r**prm.exponent
    work = 0.0
    for k, xk in enumerate(x):
        # cell average of a linear function is its value at the clipped cell centre
        lo, hi = max(xk[0] - eps / 2, 0.0), min(xk[0] + eps / 2, 1.0)
        work += w * t * amplitude * 0.5 * (lo + hi) * uf[k, 1]
    return ev + el + hard + grad - work, (ev, el, hard, grad, work)


def test_energy_matches_loop_reassembly_on_four_by_four():
    lat = Lattice(Box.unit(2), 1 / 3)
    assert lat.shape == (4, 4)
    rng = np.random.default_rng(0)
    graph = sample_fiber_graph(lat, FiberParams(2, 0.5, 3.0, seed=3))
    assert graph.num_edges > 20
    load = LoadPath(load_profile("axis_ramp", 2, axis=0, direction=1, amplitude=2.0))
    u = LatticeField(lat, rng.standard_normal(lat.shape + (2,)))
    z = _sym0_field(lat, rng)
    br = total_energy(0.6, State(u, z), MAT2, graph, load)
    expect, parts = _naive_total(0.6, u, z, MAT2, graph, 2.0)
    got = (br.e_nonlocal, br.e_elastic, br.e_hardening, br.e_gradient, br.work)
    np.testing.assert_allclose(got, parts, rtol=1e-12)
    assert br.total == pytest.approx(expect, rel=1e-12)
    assert br.total == pytest.approx(sum(got[:4]) - got[4], rel=1e-14)


def test_zero_state_has_zero_energy():
    lat = Lattice(Box.unit(2), 0.25)
    br = total_energy(0.0, State.zeros(lat), MAT2, None, LoadPath(load_profile("constant", 2)))
    assert br.total == 0.0 and br.to_dict()["work"] == 0.0
    assert local_energy(lat.zeros((2,)), lat.zeros((2, 2)), MAT2) == 0.0


def test_matching_plastic_strain_leaves_only_hardening_inside():
    # u = M x with M symmetric trace free and z = M: strain and gradient vanish
    # wherever the stencil stays inside, so those terms come from the boundary layer
    lat = Lattice(Box.unit(2), 1 / 4)
    M = np.array([[0.5, 0.2], [0.2, -0.5]])
    u = lat.field(lambda x: x @ M.T)
    z = LatticeField(lat, np.broadcast_to(M, lat.shape + (2, 2)))
    total, parts = local_energy(u, z, MAT2, breakdown=True)
    hard = lat.cell_volume * lat.num_nodes * float(quadratic_form(MAT2.H, M))
    assert parts["e_hardening"] == pytest.approx(hard, rel=1e-14)
    # interior-only field: nothing leaks into the boundary layer
    inner = np.zeros(lat.shape)
    inner[2, 2] = 1.0
    zi = LatticeField(lat, z.values * inner[..., None, None])
    _, p2 = local_energy(lat.zeros((2,)), zi, MAT2, breakdown=True)
    a = float(quadratic_form(MAT2.A, M))
    assert p2["e_elastic"] == pytest.approx(lat.cell_volume * a, rel=1e-14)
    assert p2["e_gradient"] == pytest.approx(lat.cell_volume * MAT2.kappa * 4 * np.sum(M * M) / lat.eps**2, rel=1e-14)
    assert total > 0


def test_affine_displacement_interior_strain_energy():
    lat = Lattice(Box.unit(1), 0.25)
    mat = MaterialTensors(Tensor4.identity(1, 3.0), Tensor4.identity(1, 4.0), 0.1)
    u = lat.field(lambda x: 2.0 * x)
    _, parts = local_energy(u, lat.zeros((1, 1)), mat, breakdown=True)
    # four interior positions with strain 2, the exterior cell reads 0 -> 0, the last one 2 -> 0
    expect = lat.eps * (4 * 3.0 * 4.0 + 3.0 * (2.0 / lat.eps) ** 2)
    assert parts["e_elastic"] == pytest.approx(expect, rel=1e-14)


def test_single_edge_fiber_energy():
    lat = Lattice(Box.unit(1), 0.5)
    g = FiberGraph.from_edges(lat, FiberParams(1, 0.25, 2.0), [[0, 1]])
    u = LatticeField(lat, [[0.0], [1.0], [0.0]])
    assert nonlocal_energy(u, g) == pytest.approx(2 * 0.5**0.5, rel=1e-15)
    assert nonlocal_energy(u, g, literal=True) == pytest.approx(2 * 0.5**0.5, rel=1e-15)


def test_fiber_energy_vanishes_on_constants_and_rotations():
    lat = Lattice(Box.unit(2), 1 / 8)
    g = sample_fiber_graph(lat, FiberParams(2, 0.5, 2.0, seed=0))
    assert nonlocal_energy(lat.zeros((2,)), g) == 0.0
    const = lat.field(lambda x: np.tile([1.5, -2.0], (len(x), 1)))
    assert nonlocal_energy(const, g) == 0.0
    rot = lat.field(lambda x: np.stack([-x[:, 1], x[:, 0]], 1))
    assert nonlocal_energy(rot, g) <= 1e-25


def test_literal_and_cancelled_fiber_energy_agree():
    lat = Lattice(Box.unit(2), 1 / 8)
    g = sample_fiber_graph(lat, FiberParams(2, 0.6, 2.5, seed=4))
    u = LatticeField(lat, np.random.default_rng(1).standard_normal(lat.shape + (2,)))
    assert nonlocal_energy(u, g, literal=True) == pytest.approx(nonlocal_energy(u, g), rel=1e-12)


def test_load_work_examples():
    lat = Lattice(Box.unit(2), 0.25)
    load = LoadPath(load_profile("constant", 2, vector=[2.0, -1.0]))
    u = lat.field(lambda x: np.tile([0.5, 3.0], (len(x), 1)))
    assert load_work(1.0, lat.zeros((2,)), load) == 0.0
    assert load_work(1.0, u, load) == pytest.approx((2.0 * 0.5 - 3.0) * lat.cell_volume * lat.num_nodes)
    rng = np.random.default_rng(2)
    u1 = LatticeField(lat, rng.standard_normal(lat.shape + (2,)))
    u2 = LatticeField(lat, rng.standard_normal(lat.shape + (2,)))
    assert load_work(0.3, u1 + u2, load) == pytest.approx(load_work(0.3, u1, load) + load_work(0.3, u2, load))


def test_dissipation_examples():
    lat = Lattice(Box.unit(2), 0.5)
    law = FrobeniusDissipation(1.0)
    assert dissipation(lat.zeros((2, 2)), law) == 0.0
    dz = lat.zeros((2, 2))
    dz.values[1, 1] = [[1.8, 0.0], [0.0, -2.4]]  # Frobenius norm 3
    assert dissipation(dz, law) == pytest.approx(0.75)
    rand = _sym0_field(lat, np.random.default_rng(3))
    assert dissipation(rand * 2.0, law) == pytest.approx(2.0 * dissipation(rand, law))


def test_difference_adjoint_is_negative_backward_divergence():
    lat = Lattice(Box.unit(2), 0.2)
    D, E, _ = support_difference_matrices(lat)
    rng = np.random.default_rng(4)
    u = LatticeField(lat, rng.standard_normal(lat.shape))
    pshape = lat.padded_shape
    for i, Di in enumerate(D):
        G = rng.standard_normal(pshape)
        div = np.zeros(lat.shape)
        for idx in np.ndindex(lat.shape):
            # node idx sits at padded position idx + 1; its backward neighbour may be exterior
            p = tuple(k + 1 for k in idx)
            q = list(p)
            q[i] -= 1
            div[idx] = (G[p] - G[tuple(q)]) / lat.eps
        lhs = float(np.sum((Di @ u.flat()) * G.ravel()))
        rhs = float(np.sum(u.values * -div))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def _ramp2d(p, with_load=True):
    model = plate_model(p)
    if not with_load:
        model = DiscreteModel(model.lattice, model.material, model.graph, None, model.dissipation)
    return model


def test_field_gradients_match_finite_differences():
    model = _ramp2d(3.0)
    lat = model.lattice
    rng = np.random.default_rng(5)
    st_ = State(LatticeField(lat, 0.2 * rng.standard_normal(lat.shape + (2,))), _sym0_field(lat, rng) * 0.1)
    gu = grad_u_energy(0.5, st_, model.material, model.graph, model.load)
    gz = grad_z_smooth(0.5, st_, model.material, model.graph, model.load)

    def E(state):
        return total_energy(0.5, state, model.material, model.graph, model.load).total

    h = 1e-5
    for _ in range(5):
        v = LatticeField(lat, rng.standard_normal(lat.shape + (2,)))
        fd = (E(State(st_.u + v * h, st_.z)) - E(State(st_.u - v * h, st_.z))) / (2 * h)
        exact = float(np.sum(gu.values * v.values))
        assert fd == pytest.approx(exact, rel=1e-6)
        wz = _sym0_field(lat, rng)
        fd = (E(State(st_.u, st_.z + wz * h)) - E(State(st_.u, st_.z - wz * h))) / (2 * h)
        assert fd == pytest.approx(float(np.sum(gz.values * wz.values)), rel=1e-6)
    # the z gradient lives in the plastic space
    np.testing.assert_allclose(project_sym0(gz.flat()), gz.flat(), atol=1e-12)


def test_zero_state_zero_load_has_zero_gradients():
    model = _ramp2d(2.0, with_load=False)
    st_ = State.zeros(model.lattice)
    assert not np.any(grad_u_energy(0.0, st_, model.material, model.graph).values)
    assert not np.any(grad_z_smooth(0.0, st_, model.material, model.graph).values)


def test_translation_direction_is_orthogonal_to_gradient():
    model = _ramp2d(3.0, with_load=False)
    lat = model.lattice
    rng = np.random.default_rng(6)
    inside = np.zeros(lat.shape)
    inside[1:-1, 1:-1] = 1.0
    u = LatticeField(lat, rng.standard_normal(lat.shape + (2,)) * inside[..., None])
    st_ = State(u, _sym0_field(lat, rng, inside))
    g = grad_u_energy(0.0, st_, model.material, model.graph)
    for c in ([1.0, 0.0], [0.3, -2.0]):
        assert abs(float(np.sum(g.values * np.asarray(c)))) <= 1e-10 * np.abs(g.values).sum()


def test_power_examples_and_bound():
    model = _ramp2d(2.0)
    lat = model.lattice
    load = model.load
    assert power(0.3, State.zeros(lat), load) == 0.0
    rng = np.random.default_rng(7)
    C = load.lipschitz_constant(lat)
    for _ in range(50):
        u = LatticeField(lat, rng.standard_normal(lat.shape + (2,)))
        pw = power(0.3, State(u, lat.zeros((2, 2))), load)
        assert pw == pytest.approx(-load_work(1.0, u, load), rel=1e-14)
        assert abs(pw) <= C * np.sqrt(lat.cell_volume * np.sum(u.values**2)) * (1 + 1e-12)
    y = model.pack(State(u, lat.zeros((2, 2))))
    assert model.power(0.3, y) == pytest.approx(pw, rel=1e-14)


def test_one_sided_power_at_load_kink():
    lat = Lattice(Box.unit(1), 0.25)
    mat = MaterialTensors(Tensor4.identity(1, 1.0), Tensor4.identity(1, 2.0), 0.05)
    load = LoadPath(load_profile("constant", 1), time_scaling("load_unload", peak=0.5))
    model = DiscreteModel(lat, mat, None, load)
    y = np.concatenate([np.ones(5), np.zeros(5)])
    assert model.power(0.5, y, -1) == pytest.approx(-model.power(0.5, y, +1))
    assert model.power(0.5, y, -1) < 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95), st.sampled_from([2.0, 3.0]))
def test_energy_is_convex(seed, theta, p):
    model = _ramp2d(p)
    rng = np.random.default_rng(seed)
    y1, y2 = rng.standard_normal((2, model.nu + model.nz))
    e = lambda y: model.energy(0.4, y)  # noqa: E731
    mix = e(theta * y1 + (1 - theta) * y2)
    bound = theta * e(y1) + (1 - theta) * e(y2)
    scale = abs(e(y1)) + abs(e(y2)) + 1.0
    assert mix <= bound + 1e-10 * scale


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_gradient_is_strongly_monotone(p):
    model = _ramp2d(p)
    nu, _ = coercivity_constant(model.lattice, model.material)
    assert nu > 0
    rng = np.random.default_rng(8)
    for _ in range(100):
        y1, y2 = rng.standard_normal((2, model.nu + model.nz)) * 10.0 ** rng.uniform(-2, 1)
        g1 = np.concatenate([model.grad_u(0.2, y1), model.grad_z(0.2, y1)])
        g2 = np.concatenate([model.grad_u(0.2, y2), model.grad_z(0.2, y2)])
        h = y1 - y2
        _, gu2, z2, gz2 = model.norm_terms(h)
        u2 = model.w * float(h[: model.nu] @ h[: model.nu])
        pairing = float((g1 - g2) @ h)
        assert pairing >= nu * (u2 + gu2 + z2 + gz2) - 1e-10 * (1 + abs(pairing))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_energy_scaling_laws(p):
    model = _ramp2d(p, with_load=False)
    rng = np.random.default_rng(9)
    y = rng.standard_normal(model.nu + model.nz)
    u, z = model.split(y)
    for a in (0.5, 2.0, -3.0):
        assert model.e_nonlocal(a * u) == pytest.approx(abs(a) ** p * model.e_nonlocal(u), rel=1e-12)
        assert sum(model.local_terms(a * u, a * z)) == pytest.approx(a * a * sum(model.local_terms(u, z)), rel=1e-12)


def test_pack_and_unpack_are_inverse():
    model = _ramp2d(2.0)
    lat = model.lattice
    rng = np.random.default_rng(10)
    st_ = State(LatticeField(lat, rng.standard_normal(lat.shape + (2,))), _sym0_field(lat, rng))
    back = model.unpack(model.pack(st_))
    np.testing.assert_allclose(back.u.values, st_.u.values, atol=1e-15)
    np.testing.assert_allclose(back.z.values, st_.z.values, atol=1e-14)
    back.z.check_plastic()
