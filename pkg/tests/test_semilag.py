import numpy as np
import pytest

from slgfm import gfm, semilag
from slgfm.grid import NodeField, make_grid, sample_function
from slgfm.levelset import LevelSetField, compute_geometry
from slgfm.semilag import (FALLBACK, IRREGULAR_GHOST, REGULAR, StepSizeError,
                           interpolate_departures, trace_departure)


def const_velocity(g, vx, vy):
    return NodeField(g, np.stack((np.full(g.shape, float(vx)),
                                  np.full(g.shape, float(vy)))))


def rotation_velocity(g):
    X, Y = g.meshgrid()
    return NodeField(g, np.stack((-Y, X)))


def test_zero_velocity_identity():
    g = make_grid(-2, 2, -2, 2, 21, 21)
    dp = trace_departure(const_velocity(g, 0, 0), None, 0.05)
    X, Y = g.meshgrid()
    assert np.array_equal(dp.xd_n, X) and np.array_equal(dp.yd_n, Y)
    assert np.array_equal(dp.xd_m, X) and np.array_equal(dp.yd_m, Y)


def test_constant_velocity_exact():
    g = make_grid(-2, 2, -2, 2, 41, 41)
    dt = 0.04
    V = const_velocity(g, 1, 1)
    dp = trace_departure(V, V, dt)
    X, Y = g.meshgrid()
    inner = np.zeros(g.shape, dtype=bool)
    inner[1:-1, 1:-1] = True   # boundary departures clamp to the domain
    assert np.abs(dp.xd_n - (X - dt))[inner].max() <= 1e-14
    assert np.abs(dp.yd_n - (Y - dt))[inner].max() <= 1e-14
    inner2 = np.zeros(g.shape, dtype=bool)
    inner2[1:-1, 1:-1] = True
    assert np.abs(dp.xd_m - (X - 2 * dt))[inner2].max() <= 1e-14
    assert dp.n_clamped_interior == 0


def test_step_size_guard():
    g = make_grid(-2, 2, -2, 2, 41, 41)
    with pytest.raises(StepSizeError):
        trace_departure(const_velocity(g, 1, 0), None, 0.06)   # 0.06 >= dx/2
    # displacement exactly half a cell is already too far
    with pytest.raises(StepSizeError):
        trace_departure(const_velocity(g, 1, 0), None, 0.05)
    trace_departure(const_velocity(g, 1, 0), None, 0.0499)


def test_rotation_departure_point_example():
    # V = (-y, x): departure from (1, 0) after dt = 0.1 is the clockwise
    # rotation (cos 0.1, -sin 0.1) up to the RK2 truncation
    g = make_grid(-2, 2, -2, 2, 5, 5)
    V = rotation_velocity(g)
    dp = trace_departure(V, V, 0.1)
    i, j = 3, 2   # node (1, 0)
    assert g.node_x(i) == 1.0 and g.node_y(j) == 0.0
    err = np.hypot(dp.xd_n[j, i] - np.cos(0.1), dp.yd_n[j, i] + np.sin(0.1))
    assert err <= 5e-4


def test_rotation_flow_map_third_order():
    # dt-halving against the exact rotation flow map: RK2 departure error is
    # O(dt^3), so the measured slope must stay close to 3
    g = make_grid(-2, 2, -2, 2, 81, 81)
    V = rotation_velocity(g)
    X, Y = g.meshgrid()
    inner = np.zeros(g.shape, dtype=bool)
    inner[4:-4, 4:-4] = True
    errs = []
    for dt in (0.004, 0.002, 0.001):
        dp = trace_departure(V, V, dt)
        c, s = np.cos(dt), np.sin(dt)
        xe = c * X + s * Y     # rotate backward by dt
        ye = -s * X + c * Y
        errs.append(np.hypot(dp.xd_n - xe, dp.yd_n - ye)[inner].max())
    slopes = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(slopes) >= 2.7


def flat_interface_data(n=40, xc=0.5231, mu=(1.0, 3.0), slopes=(2.0, -0.7),
                        offset=0.25, tang=0.4):
    g = make_grid(-2, 2, -2, 2, n + 1, n + 1)
    mu_m, mu_p = mu
    sm, sp = slopes

    def um(x, y):
        return offset + sm * (x - xc) + tang * y

    def up(x, y):
        return offset + sp * (x - xc) + tang * y

    phi = sample_function(g, lambda x, y, t: x - xc)
    geo = compute_geometry(LevelSetField(phi))
    X, Y = g.meshgrid()
    u = NodeField(g, np.where(phi.values < 0, um(X, Y), up(X, Y)))
    b = mu_p * sp - mu_m * sm
    systems = gfm.build_local_systems(geo, mu_m, mu_p,
                                      lambda x, y, t: np.full_like(x, b), 0.0)
    vals = gfm.evaluate_interface_values(systems, u)
    return g, geo, u, systems, vals, um, up


def test_affine_reproduction_per_class():
    # piecewise-linear two-phase data: Regular and ghost-corner nodes must
    # reproduce the assumed side's linear extension at the departure point
    g, geo, u, systems, vals, um, up = flat_interface_data()
    V = const_velocity(g, 1.0, 0.6)
    dt = 0.3 * g.dx
    dp = trace_departure(V, V, dt)
    dv = interpolate_departures(dp.xd_n, dp.yd_n, u, geo, systems, vals,
                                geo.sign)
    assert dv.n_irregular > 0
    worst = 0.0
    for j in range(1, g.ny - 1):
        for i in range(1, g.nx - 1):
            if dv.klass[j, i] == FALLBACK:
                continue
            fn = um if geo.sign[j, i] < 0 else up
            worst = max(worst, abs(dv.values[0, j, i]
                                   - fn(dp.xd_n[j, i], dp.yd_n[j, i])))
    assert worst <= 1e-10


def test_regular_nodes_never_read_across_interface():
    # give the plus phase a huge offset: any cross-interface read by a
    # Regular stencil would show up at O(1000), far above solve roundoff
    g, geo, u, systems, vals, um, up = flat_interface_data()
    shifted = u.values + np.where(geo.sign > 0, 1000.0, 0.0)
    u2 = NodeField(g, shifted)
    V = const_velocity(g, 1.0, 0.6)
    dp = trace_departure(V, V, 0.3 * g.dx)
    dv = interpolate_departures(dp.xd_n, dp.yd_n, u2, geo, None, None,
                                geo.sign, use_ghost=False)
    reg = dv.klass == REGULAR
    assert reg.sum() > 100
    X = dp.xd_n[reg]
    Y = dp.yd_n[reg]
    exact = np.where(geo.sign[reg] < 0, um(X, Y), up(X, Y) + 1000.0)
    assert np.abs(dv.values[0][reg] - exact).max() <= 1e-9


def test_quadratic_exactness_single_region():
    g = make_grid(-2, 2, -2, 2, 41, 41)
    phi = sample_function(g, lambda x, y, t: x - 10.0)   # no interface
    geo = compute_geometry(LevelSetField(phi))
    V = const_velocity(g, 0.8, -0.5)
    dp = trace_departure(V, V, 0.4 * g.dx)
    for fn in (lambda x, y: x * x,
               lambda x, y: x * x + x * y - 2.0 * y * y):
        u = NodeField(g, fn(*g.meshgrid()))
        dv = interpolate_departures(dp.xd_n, dp.yd_n, u, geo, None, None,
                                    geo.sign)
        inner = np.zeros(g.shape, dtype=bool)
        inner[1:-1, 1:-1] = True
        err = np.abs(dv.values[0] - fn(dp.xd_n, dp.yd_n))[inner].max()
        assert err <= 1e-11
        assert (dv.klass[inner] == REGULAR).all()


def test_monotone_bound_for_regular_on_linear_data():
    # linear data zeroes the ENO corrections, so the Regular value is a
    # convex bilinear combination: it must stay inside the field range
    g = make_grid(-2, 2, -2, 2, 41, 41)
    phi = sample_function(g, lambda x, y, t: x - 10.0)
    geo = compute_geometry(LevelSetField(phi))
    X, Y = g.meshgrid()
    u = NodeField(g, 1.3 * X - 0.7 * Y + 0.1)
    V = const_velocity(g, 0.8, -0.5)
    dp = trace_departure(V, V, 0.4 * g.dx)
    dv = interpolate_departures(dp.xd_n, dp.yd_n, u, geo, None, None,
                                geo.sign)
    reg = dv.klass == REGULAR
    assert dv.values[0][reg].min() >= u.values.min() - 1e-12
    assert dv.values[0][reg].max() <= u.values.max() + 1e-12


def test_blind_mode_same_classes_different_values():
    g, geo, u, systems, vals, um, up = flat_interface_data()
    V = const_velocity(g, 1.0, 0.6)
    dp = trace_departure(V, V, 0.3 * g.dx)
    aware = interpolate_departures(dp.xd_n, dp.yd_n, u, geo, systems, vals,
                                   geo.sign, use_ghost=True)
    blind = interpolate_departures(dp.xd_n, dp.yd_n, u, geo, systems, vals,
                                   geo.sign, use_ghost=False)
    # identical classification drives identical BDF1/BDF2 choices downstream
    assert np.array_equal(aware.klass, blind.klass)
    assert (aware.n_regular, aware.n_irregular, aware.n_fallback) == \
           (blind.n_regular, blind.n_irregular, blind.n_fallback)
    # but the interface-aware values actually differ near the interface
    diff = np.abs(aware.values - blind.values).max()
    assert diff > 1e-3
    # far from the interface both schemes agree exactly
    far = np.abs(geo.phi_values) > 4 * g.dx
    assert np.abs(aware.values[0] - blind.values[0])[far].max() == 0.0


def test_no_interior_clamps_at_benchmark_step_sizes():
    g = make_grid(-2, 2, -2, 2, 41, 41)
    V = const_velocity(g, 1.0, 1.0)
    dp = trace_departure(V, V, 0.4 * g.dx)   # translation-case step size
    assert dp.n_clamped_interior == 0
    g2 = make_grid(-2, 2, -2, 2, 81, 81)
    Vr = rotation_velocity(g2)
    dp2 = trace_departure(Vr, Vr, 0.2 * g2.dx / 2.83)
    assert dp2.n_clamped_interior == 0


def test_vector_field_componentwise():
    g, geo, u, systems, vals, um, up = flat_interface_data()
    u2 = NodeField(g, np.stack((u.values, 2.0 * u.values)))
    systems2 = gfm.build_local_systems(
        geo, 1.0, 3.0,
        lambda x, y, t: np.stack((np.full_like(x, 3.0 * (-0.7) - 2.0),
                                  2.0 * np.full_like(x, 3.0 * (-0.7) - 2.0))),
        0.0, ncomp=2)
    vals2 = gfm.evaluate_interface_values(systems2, u2)
    V = const_velocity(g, 1.0, 0.6)
    dp = trace_departure(V, V, 0.3 * g.dx)
    dv = interpolate_departures(dp.xd_n, dp.yd_n, u2, geo, systems2, vals2,
                                geo.sign)
    ok = dv.klass != FALLBACK
    assert np.abs(dv.values[1][ok] - 2.0 * dv.values[0][ok]).max() <= 1e-9
