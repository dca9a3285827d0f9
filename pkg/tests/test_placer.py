import itertools

import numpy as np
import pytest

from stack3d.models import Die, Library, Rect, Status, is_shrunk, variant_of
from stack3d.params import PlacerParams
from stack3d.services import legalize, metrics, pdk3d, placer
from stack3d.services.placer import DensityGrid, GlobalPlacer, PlacementError, PlacementProblem

from helpers import block, cell, comp, design, net, port


@pytest.fixture
def pin_library():
    return Library(masters=[block("P", 0.2, 0.2), cell("INV")])


def two_pin_design():
    return design([comp("a", "P", 9.9, 9.9), comp("b", "P", 12.9, 13.9)], [net("n", "a/A", "b/A")])


@pytest.mark.parametrize("model", ["wa", "lse"])
def test_smoothed_wirelength_approaches_hpwl(pin_library, model):
    value, _ = placer.hpwl_smooth(two_pin_design(), pin_library, gamma=0.01, model=model)
    assert value == pytest.approx(7.0, abs=1e-6)


def test_lse_over_and_wa_under_estimate(pin_library):
    d = two_pin_design()
    exact = metrics.hpwl(d, pin_library)
    lse, _ = placer.hpwl_smooth(d, pin_library, gamma=1.0, model="lse")
    wa, _ = placer.hpwl_smooth(d, pin_library, gamma=1.0, model="wa")
    assert exact == pytest.approx(7.0)
    assert lse > exact > wa


def test_single_pin_net_has_no_wirelength(pin_library):
    d = design([comp("a", "P", 1.0, 1.0)], [net("n", "a/A")])
    value, grads = placer.hpwl_smooth(d, pin_library, gamma=1.0)
    assert value == 0.0
    assert grads == {"a": (0.0, 0.0)}


def random_cells(seed, count=30, nets=40):
    rng = np.random.default_rng(seed)
    comps = [comp(f"c{i}", "INV", float(rng.uniform(0, 20)), float(rng.uniform(0, 20))) for i in range(count)]
    net_list = []
    for k in range(nets):
        size = int(rng.integers(2, 5))
        picks = rng.choice(count, size=size, replace=False)
        net_list.append(net(f"n{k}", *[f"c{int(i)}/{'Z' if j == 0 else 'A'}" for j, i in enumerate(picks)]))
    return design(comps, net_list, die=Rect(lx=0.0, ly=0.0, ux=20.0, uy=20.0))


@pytest.mark.parametrize("model", ["wa", "lse"])
def test_wirelength_gradient_matches_finite_differences(pin_library, model):
    d = random_cells(0)
    problem = PlacementProblem(d, pin_library, [c.name for c in d.components],
                               PlacerParams(gamma=2.0, wirelength_model=model))
    x, y = problem.centers()
    _, gx, gy = problem.wirelength(x, y)
    h = 1e-3
    for k in range(problem.num_movable):
        e = np.zeros_like(x)
        e[k] = h
        fd_x = (problem.wirelength(x + e, y)[0] - problem.wirelength(x - e, y)[0]) / (2 * h)
        fd_y = (problem.wirelength(x, y + e)[0] - problem.wirelength(x, y - e)[0]) / (2 * h)
        assert gx[k] == pytest.approx(fd_x, rel=1e-4, abs=1e-6)
        assert gy[k] == pytest.approx(fd_y, rel=1e-4, abs=1e-6)


def test_density_gradient_matches_finite_differences(pin_library):
    rng = np.random.default_rng(5)
    comps = [comp(f"c{i}", "INV", float(rng.uniform(3, 7)), float(rng.uniform(3, 7))) for i in range(30)]
    d = design(comps, die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0))
    problem = PlacementProblem(d, pin_library, [c.name for c in comps], PlacerParams(bin_grid=4))
    x, y = problem.centers()
    value, gx, gy = problem.density(x, y)
    assert value > 0
    h = 1e-5
    checked = 0
    for k in range(problem.num_movable):
        edges_x = np.array([x[k] - problem.eff_w[k] / 2, x[k] + problem.eff_w[k] / 2])
        edges_y = np.array([y[k] - problem.eff_h[k] / 2, y[k] + problem.eff_h[k] / 2])
        # Overlap lengths have kinks where a cell edge crosses a bin edge.
        if (np.abs(edges_x[:, None] - problem.grid.edges_x[None, :]).min() < 1e-3
                or np.abs(edges_y[:, None] - problem.grid.edges_y[None, :]).min() < 1e-3):
            continue
        e = np.zeros_like(x)
        e[k] = h
        fd_x = (problem.density(x + e, y)[0] - problem.density(x - e, y)[0]) / (2 * h)
        fd_y = (problem.density(x, y + e)[0] - problem.density(x, y - e)[0]) / (2 * h)
        assert gx[k] == pytest.approx(fd_x, rel=1e-3, abs=1e-6)
        assert gy[k] == pytest.approx(fd_y, rel=1e-3, abs=1e-6)
        checked += 1
    assert checked > 10


def test_density_grid_usage_is_indexed_x_then_y():
    grid = DensityGrid(Rect(lx=0.0, ly=0.0, ux=4.0, uy=4.0), 4)
    usage = grid.usage([Rect(lx=1.0, ly=0.0, ux=2.0, uy=1.0)])
    assert usage[1, 0] == pytest.approx(1.0)
    assert usage.sum() == pytest.approx(1.0)
    grid.add_fixed([Rect(lx=0.0, ly=0.0, ux=1.0, uy=1.0)])
    assert grid.limit(0.5)[0, 0] == 0.0
    assert grid.limit(0.5)[3, 3] == pytest.approx(0.5)


def test_density_penalty_is_zero_when_spread(pin_library):
    comps = [comp(f"c{i}", "INV", 2.5 * i + 0.5, 2.5 * j + 0.5) for i, j in itertools.product(range(4), repeat=2)]
    d = design(comps, die=Rect(lx=0.0, ly=0.0, ux=10.0, uy=10.0))
    value, _ = placer.density_penalty(d, pin_library, DensityGrid(d.die_bottom, 4))
    assert value == 0.0


@pytest.mark.parametrize("count, side", [(1, 4), (100, 16), (1000, 32), (10 ** 6, 64)])
def test_default_bin_grid(count, side):
    assert placer.default_bin_grid(count) == side


def test_single_cell_moves_to_its_port(pin_library):
    d = design([comp("c", "INV", status=Status.UNPLACED)], [net("n", "c/A", "PIN p")],
               [port("p", 5.0, 15.0)], die=Rect(lx=0.0, ly=0.0, ux=20.0, uy=20.0))
    placed = placer.global_place(d, pin_library, ["c"], PlacerParams(gamma=1.0, max_iters=500))
    c = placed.component("c")
    assert c.status is Status.PLACED
    assert c.x + 0.19 == pytest.approx(5.0, abs=0.1)
    assert c.y + 0.7 == pytest.approx(15.0, abs=0.1)


def test_spread_placement_keeps_improving_wirelength(pin_library):
    d = design([comp("c", "INV", status=Status.UNPLACED)], [net("n", "c/A", "PIN p")],
               [port("p", 5.0, 15.0)], die=Rect(lx=0.0, ly=0.0, ux=20.0, uy=20.0))
    problem = PlacementProblem(d, pin_library, ["c"], PlacerParams(gamma=1.0, max_iters=500))
    gp = GlobalPlacer(problem)
    x, y = gp.run()
    assert gp.final_overflow == 0.0
    assert gp.iterations > 1
    assert all(after <= before for _, _, before, after in gp.history)
    assert problem.exact_hpwl(x, y) < 0.2


def test_settled_placement_under_target_stops_at_once(pin_library):
    d = design([comp(f"c{i}", "INV", status=Status.UNPLACED) for i in range(4)],
               die=Rect(lx=0.0, ly=0.0, ux=20.0, uy=20.0))
    gp = GlobalPlacer(PlacementProblem(d, pin_library, [f"c{i}" for i in range(4)], PlacerParams(max_iters=500)))
    gp.run()
    assert gp.iterations == 1
    assert gp.final_overflow <= PlacerParams().overflow_stop


def test_empty_movable_set_is_identity(pin_library):
    d = random_cells(1)
    assert placer.global_place(d, pin_library, []).model_dump() == d.model_dump()


def test_unknown_movable_component(pin_library):
    with pytest.raises(PlacementError):
        PlacementProblem(random_cells(1), pin_library, ["nope"])


def test_placement_beats_random(tiny_floorplanned):
    library, d = tiny_floorplanned
    rng = np.random.default_rng(0)
    die = d.die_bottom
    scattered = d.clone()
    for c in scattered.components:
        master = library.master(c.master)
        c.x = float(rng.uniform(die.lx, die.ux - master.width))
        c.y = float(rng.uniform(die.ly, die.uy - master.height))
        c.status = Status.PLACED
    placed = placer.global_place(d, library, [c.name for c in d.components], PlacerParams(max_iters=200))
    assert all(die.contains(library.rect_of(c), tol=1e-6) for c in placed.components)
    assert metrics.hpwl(placed, library) < 0.7 * metrics.hpwl(scattered, library)


def test_placement_is_deterministic(tiny_floorplanned):
    library, d = tiny_floorplanned
    movable = [c.name for c in d.components]
    params = PlacerParams(max_iters=40, seed=2)
    a = placer.global_place(d, library, movable, params)
    b = placer.global_place(d, library, movable, params)
    assert a.model_dump() == b.model_dump()


def test_snapshots_follow_the_interval(tiny_floorplanned):
    library, d = tiny_floorplanned
    labels = []
    placer.global_place(d, library, [c.name for c in d.components],
                        PlacerParams(max_iters=25, snapshot_every=10, overflow_stop=1e-9),
                        snapshot=lambda label, current: labels.append(label))
    assert labels == ["gp_00000", "gp_00010", "gp_00020"]


@pytest.fixture
def ram_library3d(technology):
    library2d = Library(technology=technology, masters=[block("RAM", 6.0, 4.2, pins=("D0", "Q0")), cell("INV")])
    return pdk3d.build_library3d(library2d)


@pytest.mark.parametrize("master", ["RAM_top", "RAM_bottom", "INV_top"])
def test_scale_to_minimal_keeps_centre_and_pins(ram_library3d, master):
    full = comp("m", master, 10.0, 20.0)
    shrunk = placer.scale_to_minimal(full, ram_library3d)
    assert shrunk.master == master + "_shrunk"
    assert ram_library3d.rect_of(shrunk).center == pytest.approx(ram_library3d.rect_of(full).center)
    for pin in ram_library3d.master(master).pins:
        assert ram_library3d.pin_position(shrunk, pin.name) == \
            pytest.approx(ram_library3d.pin_position(full, pin.name))


def test_scale_to_minimal_of_shrunk_is_identity(ram_library3d):
    shrunk = comp("m", "RAM_top_shrunk", 1.0, 2.0)
    assert placer.scale_to_minimal(shrunk, ram_library3d) == shrunk


def test_scale_to_minimal_needs_a_die_variant(ram_library3d):
    with pytest.raises(PlacementError):
        placer.scale_to_minimal(comp("m", "RAM"), ram_library3d)


def no_overlap_per_die(d, library):
    for die in (Die.TOP, Die.BOTTOM):
        macros = [library.rect_of(c) for c in d.components if c.die is die and library.is_macro(c)]
        for a, b in itertools.combinations(macros, 2):
            assert a.overlap_area(b) == pytest.approx(0.0, abs=1e-9)


def test_dmp_places_tiny_design(tiny_3d):
    library, d = tiny_3d
    placed = placer.run_dmp(d, library, PlacerParams(max_iters=60))
    assert all(c.is_placed for c in placed.components)
    assert all(c.status is Status.FIXED for c in placed.components if library.is_macro(c))
    assert [c.master for c in placed.components] == [c.master for c in d.components]
    no_overlap_per_die(placed, library)
    assert legalize.check_legality(placed, library).is_legal


def test_dmp_with_macros_only(ram_library3d):
    comps = [comp("t0", "RAM_top", status=Status.UNPLACED, die=Die.TOP),
             comp("t1", "RAM_top", status=Status.UNPLACED, die=Die.TOP),
             comp("b0", "RAM_bottom", status=Status.UNPLACED)]
    d = design(comps, die=Rect(lx=0.0, ly=0.0, ux=19.0, uy=19.6), top=True)
    placed = placer.run_dmp(d, ram_library3d, PlacerParams(max_iters=40))
    assert all(c.status is Status.FIXED for c in placed.components)
    no_overlap_per_die(placed, ram_library3d)
    assert legalize.check_legality(placed, ram_library3d).is_legal


def two_die_design():
    comps = [comp("t0", "RAM_top", status=Status.UNPLACED, die=Die.TOP),
             comp("t1", "RAM_top", status=Status.UNPLACED, die=Die.TOP),
             comp("b0", "RAM_bottom", status=Status.UNPLACED)]
    comps += [comp(f"c{i}", "INV_bottom", status=Status.UNPLACED) for i in range(12)]
    nets = [net(f"n{i}", f"{('t0', 't1', 'b0')[i % 3]}/Q0", f"c{i}/A") for i in range(12)]
    nets += [net(f"m{i}", f"c{i}/Z", f"{('b0', 't0', 't1')[i % 3]}/D0") for i in range(12)]
    return design(comps, nets, die=Rect(lx=0.0, ly=0.0, ux=19.0, uy=19.6), top=True)


def test_dmp_stages_keep_earlier_macro_positions(ram_library3d):
    d = two_die_design()
    stages = {}
    params = PlacerParams(max_iters=30, snapshot_every=10)
    placed = placer.run_dmp(d, ram_library3d, params,
                            snapshot=lambda label, current: stages.setdefault(label[:-6], []).append(current))
    assert set(stages) == {"dmp_a", "dmp_b", "cells_bottom"}
    final = placed.component_map()
    centre = lambda c: ram_library3d.rect_of(c).center  # noqa: E731
    shrunk = lambda c: is_shrunk(variant_of(c.master))  # noqa: E731

    # a: every BOTTOM component is projected onto the TOP plane.
    for snap in stages["dmp_a"]:
        for c in snap.components:
            assert c.die is Die.TOP
            assert shrunk(c) == (d.component(c.name).die is Die.BOTTOM)

    # b: TOP macros sit where stage a left them, projected onto BOTTOM.
    for snap in stages["dmp_b"]:
        for name in ("t0", "t1"):
            c = snap.component(name)
            assert shrunk(c) and c.die is Die.BOTTOM
            assert centre(c) == pytest.approx(centre(final[name]), abs=1e-6)
        assert not shrunk(snap.component("b0"))

    # c: every macro is frozen; only cells move.
    for snap in stages["cells_bottom"]:
        for name in ("t0", "t1", "b0"):
            assert centre(snap.component(name)) == pytest.approx(centre(final[name]), abs=1e-6)

    assert not any(shrunk(c) for c in placed.components)
    assert [(c.name, c.master, c.die) for c in placed.components] == \
        [(c.name, c.master, c.die) for c in d.components]
    assert all(final[name].status is Status.FIXED for name in ("t0", "t1", "b0"))
    no_overlap_per_die(placed, ram_library3d)
    assert legalize.check_legality(placed, ram_library3d).is_legal


def test_dmp_needs_a_partitioned_design(tiny_floorplanned):
    library, d = tiny_floorplanned
    with pytest.raises(PlacementError):
        placer.run_dmp(d, library)


def test_mixed_2d_baseline(tiny_floorplanned):
    library, d = tiny_floorplanned
    placed = placer.run_mixed_2d(d, library, PlacerParams(max_iters=60))
    assert legalize.check_legality(placed, library).is_legal
