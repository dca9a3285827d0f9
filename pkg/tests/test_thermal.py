import numpy as np
import pytest

from stack3d.models import Die, Library, Rect
from stack3d.params import ThermalParams
from stack3d.services import thermal
from stack3d.services.thermal import ThermalConvergenceError

from helpers import cell, comp, design


@pytest.fixture
def library():
    return Library(masters=[cell("S", 1.0, 1.0), cell("BIG", 10.0, 10.0)])


def test_power_lands_in_its_bin(library):
    d = design([comp("s", "S", 3.0, 4.0)], die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0))
    planes = thermal.aggregate_power(d, library, {"s": 0.1}, grid_n=10, scale=10.0)
    assert planes.shape == (1, 10, 10)
    assert planes[0, 3, 4] == pytest.approx(1.0)
    assert planes.sum() == pytest.approx(1.0)


def test_straddling_component_splits_by_area(library):
    d = design([comp("s", "S", 3.5, 4.0)], die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0))
    planes = thermal.aggregate_power(d, library, {"s": 0.1}, grid_n=10, scale=10.0)
    assert planes[0, 3, 4] == pytest.approx(0.5)
    assert planes[0, 4, 4] == pytest.approx(0.5)


def test_power_outside_the_die_is_kept(library):
    d = design([comp("s", "S", 9.5, 0.0)], die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0))
    planes = thermal.aggregate_power(d, library, {"s": 0.2}, grid_n=10, scale=1.0)
    assert planes[0, 9, 0] == pytest.approx(0.2)


def test_planes_follow_dies(library):
    d = design([comp("t", "S", 0.0, 0.0, die=Die.TOP), comp("b", "S", 9.0, 9.0)],
               die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0), top=True)
    planes = thermal.aggregate_power(d, library, {"t": 0.1, "b": 0.3}, grid_n=10, scale=1.0)
    assert planes.shape == (2, 10, 10)
    assert planes[1, 0, 0] == pytest.approx(0.1)
    assert planes[0, 9, 9] == pytest.approx(0.3)


def reference_die(n):
    """Die whose cells have the reference area, so the quoted resistances apply unscaled."""
    side = n * 100.0
    return Rect(lx=0.0, ly=0.0, ux=side, uy=side)


def test_zero_power_is_ambient():
    network = thermal.build_network(np.zeros((2, 4, 4)), reference_die(4))
    result = thermal.solve_steady(network)
    assert np.all(result.temperatures == 45.0)
    assert result.method == "zero-power"


def dense_oracle(power, params):
    """Hand-assembled conductance matrix for square reference cells."""
    planes, n, _ = power.shape
    index = lambda p, i, j: (p * n + i) * n + j  # noqa: E731
    size = planes * n * n
    g = np.zeros((size, size))

    def tie(a, b, value):
        g[a, a] += value
        g[b, b] += value
        g[a, b] -= value
        g[b, a] -= value

    for p in range(planes):
        for i in range(n):
            for j in range(n):
                for di, dj in ((1, 0), (0, 1)):
                    if i + di < n and j + dj < n:
                        tie(index(p, i, j), index(p, i + di, j + dj), 1.0 / params.r_lateral)
                if p + 1 < planes:
                    tie(index(p, i, j), index(p + 1, i, j), 1.0 / params.r_vertical)
                if p == 0:
                    g[index(p, i, j), index(p, i, j)] += 1.0 / params.r_sink
    return params.ambient_c + np.linalg.solve(g, power.reshape(-1)).reshape(power.shape)


@pytest.mark.parametrize("planes", [1, 2])
def test_direct_solve_matches_dense_oracle(planes):
    rng = np.random.default_rng(planes)
    power = rng.uniform(0.0, 1.0, size=(planes, 5, 5))
    params = ThermalParams()
    result = thermal.solve_steady(thermal.build_network(power, reference_die(5), params), params)
    assert result.method == "direct"
    assert np.allclose(result.temperatures, dense_oracle(power, params), atol=1e-7, rtol=0)


def test_heat_leaves_through_the_sink():
    power = np.random.default_rng(4).uniform(0.0, 2.0, size=(2, 6, 6))
    result = thermal.solve_steady(thermal.build_network(power, reference_die(6)))
    assert result.heat_to_ambient == pytest.approx(power.sum(), rel=1e-9)


def test_rotated_power_gives_rotated_temperatures():
    power = np.zeros((2, 5, 5))
    power[1, 0, 1] = 3.0
    power[0, 4, 2] = 1.0
    die = reference_die(5)
    base = thermal.solve_steady(thermal.build_network(power, die)).temperatures
    rotated = thermal.solve_steady(thermal.build_network(np.rot90(power, axes=(1, 2)), die)).temperatures
    assert np.allclose(rotated, np.rot90(base, axes=(1, 2)), atol=1e-9)


def test_gauss_seidel_agrees_with_direct():
    power = np.random.default_rng(8).uniform(0.0, 1.0, size=(2, 6, 6))
    die = reference_die(6)
    direct = thermal.solve_steady(thermal.build_network(power, die), ThermalParams(solver="direct"))
    params = ThermalParams(solver="gauss_seidel", tolerance=1e-10)
    iterative = thermal.solve_steady(thermal.build_network(power, die, params), params)
    assert iterative.method == "gauss_seidel" and iterative.sweeps > 0
    assert np.allclose(iterative.temperatures, direct.temperatures, atol=1e-6, rtol=0)


def test_gauss_seidel_sweep_cap():
    power = np.ones((1, 6, 6))
    params = ThermalParams(solver="gauss_seidel", max_sweeps=2)
    with pytest.raises(ThermalConvergenceError) as info:
        thermal.solve_steady(thermal.build_network(power, reference_die(6), params), params)
    assert info.value.exit_code == 4


def test_top_sink_cools_the_stack():
    power = np.ones((2, 4, 4))
    die = reference_die(4)
    adiabatic = thermal.solve_steady(thermal.build_network(power, die)).t_max
    cooled_params = ThermalParams(r_top_sink=2.0)
    cooled = thermal.solve_steady(thermal.build_network(power, die, cooled_params), cooled_params).t_max
    assert cooled < adiabatic


def test_uniform_single_plane_rise():
    power = np.full((1, 4, 4), 0.5)
    result = thermal.solve_steady(thermal.build_network(power, reference_die(4)))
    # Each reference cell sinks through 2 K/W.
    assert np.allclose(result.temperatures, 45.0 + 0.5 * 2.0)


def test_stacked_half_footprint_runs_hotter(library):
    power = {f"c{i}": 0.1 for i in range(8)}
    flat = design([comp(f"c{i}", "BIG", 10.0 * (i % 4), 10.0 * (i // 4)) for i in range(8)],
                  die=Rect(lx=0.0, ly=0.0, ux=40.0, uy=40.0))
    stacked = design([comp(f"c{i}", "BIG", 10.0 * (i % 4), 10.0 * (i // 4 % 2),
                           die=Die.TOP if i >= 4 else Die.BOTTOM) for i in range(8)],
                     die=Rect(lx=0.0, ly=0.0, ux=40.0, uy=20.0), top=True)
    t2, t3 = thermal.compare_2d_3d(flat, library, stacked, library, ThermalParams(grid_n=4), power)
    assert t3 >= t2


def test_result_dict():
    power = np.ones((2, 3, 3))
    data = thermal.solve_steady(thermal.build_network(power, reference_die(3))).to_dict()
    assert set(data) == {"t_max_c", "ambient_c", "grid_n", "method", "planes"}
    assert set(data["planes"]) == {"bottom", "top"}
    assert data["grid_n"] == 3
    assert data["t_max_c"] == pytest.approx(max(max(row) for row in data["planes"]["top"]))


@pytest.mark.parametrize("solver, slack", [("direct", 1e-9), ("gauss_seidel", 1e-6)])
def test_more_power_never_cools_any_node(solver, slack):
    rng = np.random.default_rng(21)
    die = reference_die(5)
    params = ThermalParams(solver=solver, tolerance=1e-10)
    for _ in range(5):
        power = rng.uniform(0.0, 1.0, size=(2, 5, 5))
        base = thermal.solve_steady(thermal.build_network(power, die, params), params).temperatures
        bumped = power.copy()
        node = tuple(int(rng.integers(0, k)) for k in power.shape)
        bumped[node] += 1.0
        hotter = thermal.solve_steady(thermal.build_network(bumped, die, params), params).temperatures
        assert np.all(hotter - base >= -slack)
        assert hotter[node] > base[node]


@pytest.mark.parametrize("solver", ["direct", "gauss_seidel"])
def test_node_numbering_does_not_change_temperatures(solver):
    power = np.random.default_rng(13).uniform(0.0, 1.0, size=(2, 4, 4))
    params = ThermalParams(solver=solver, tolerance=1e-10)
    network = thermal.build_network(power, reference_die(4), params)
    perm = np.random.default_rng(5).permutation(network.num_nodes)
    relabelled = thermal.ThermalNetwork(grid_n=network.grid_n, planes=network.planes,
                                        conductance=network.conductance[perm][:, perm].tocsr(),
                                        sink=network.sink[perm], power=network.power[perm])
    base = thermal.solve_steady(network, params).temperatures.reshape(-1)
    shuffled = thermal.solve_steady(relabelled, params).temperatures.reshape(-1)
    assert np.allclose(shuffled, base[perm], atol=1e-6, rtol=0)
    assert thermal.solve_steady(relabelled, params).heat_to_ambient == pytest.approx(power.sum(), rel=1e-6)
