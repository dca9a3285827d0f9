"""
Analytical placement service.

Mixed-size global placement on one die plane: smoothed wirelength (weighted
average or log-sum-exp) plus a quadratic bin-overflow density penalty,
minimized by preconditioned momentum descent with a step-halving line
search. Also hosts the three-stage pseudo-3D DMP flow and the 2D mixed-size
baseline.
"""
import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .. import config
from ..config import Stack3dError
from ..models import (
    Component, Design, Die, Library, Orient, Rect, Status, Variant, is_shrunk, shrunk_variant,
    variant_of,
)
from ..params import PlacerParams
from . import legalize as legalizer

logger = config.logger

SQRT2 = math.sqrt(2.0)

SnapshotFn = Callable[[str, Design], None]


class PlacementError(Stack3dError):
    """Raised when a placement stage cannot run."""
    exit_code = 1


class PlacementDivergedError(PlacementError):
    """Raised when the objective stays non-finite after every step halving."""
    exit_code = 4


def default_bin_grid(num_movable: int) -> int:
    """Power-of-two bins per side near sqrt(movable), between 4 and 64."""
    side = 2 ** math.ceil(math.log2(math.sqrt(max(1, num_movable))))
    return int(min(64, max(4, side)))


class DensityGrid:
    """Square bin grid over a die with capacity and fixed usage per bin."""

    def __init__(self, die: Rect, num_bins: int):
        if num_bins < 1:
            raise PlacementError("bin grid needs at least one bin per side")
        self.die = die
        self.num_bins = num_bins
        self.bin_w = die.width / num_bins
        self.bin_h = die.height / num_bins
        self.edges_x = die.lx + self.bin_w * np.arange(num_bins + 1)
        self.edges_y = die.ly + self.bin_h * np.arange(num_bins + 1)
        self.edges_x[-1] = die.ux
        self.edges_y[-1] = die.uy
        self.capacity = np.full((num_bins, num_bins), self.bin_w * self.bin_h)
        self.fixed_usage = np.zeros((num_bins, num_bins))

    @property
    def bin_area(self) -> float:
        return self.bin_w * self.bin_h

    @staticmethod
    def _overlap(lo: np.ndarray, hi: np.ndarray, edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Interval/bin overlap lengths (k, n) and their derivative with respect to a shift."""
        b0 = edges[None, :-1]
        b1 = edges[None, 1:]
        lo = lo[:, None]
        hi = hi[:, None]
        length = np.minimum(hi, b1) - np.maximum(lo, b0)
        active = length > 0
        slope = (hi < b1).astype(float) - (lo > b0).astype(float)
        return np.where(active, length, 0.0), np.where(active, slope, 0.0)

    def overlap_x(self, lx: np.ndarray, ux: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._overlap(np.asarray(lx, float), np.asarray(ux, float), self.edges_x)

    def overlap_y(self, ly: np.ndarray, uy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._overlap(np.asarray(ly, float), np.asarray(uy, float), self.edges_y)

    def usage(self, rects: Sequence[Rect], weights: Optional[Sequence[float]] = None) -> np.ndarray:
        """Exact (weighted) overlap area of rectangles with every bin, indexed [x bin, y bin]."""
        if not rects:
            return np.zeros((self.num_bins, self.num_bins))
        ox, _ = self.overlap_x(np.array([r.lx for r in rects]), np.array([r.ux for r in rects]))
        oy, _ = self.overlap_y(np.array([r.ly for r in rects]), np.array([r.uy for r in rects]))
        if weights is not None:
            ox = ox * np.asarray(weights, float)[:, None]
        return ox.T @ oy

    def add_fixed(self, rects: Sequence[Rect]) -> None:
        self.fixed_usage += self.usage(rects)

    def limit(self, target: float) -> np.ndarray:
        """Movable usage allowed per bin before it counts as overflow."""
        return target * np.maximum(0.0, self.capacity - self.fixed_usage)


class PlacementProblem:
    """
    Array form of one placement instance.

    Variables are the centres of the movable components. Every other pin
    (fixed components on any die, placed ports) is a constant terminal.
    """

    def __init__(self, design: Design, library: Library, movable: Iterable[str],
                 params: Optional[PlacerParams] = None, die: Die = Die.BOTTOM,
                 grid: Optional[DensityGrid] = None):
        self.params = params or PlacerParams()
        self.design = design
        self.library = library
        self.plane = die
        self.die_rect = design.die_rect(die)
        movable_set = set(movable)
        unknown = movable_set - {c.name for c in design.components}
        if unknown:
            raise PlacementError(f"unknown movable components: {sorted(unknown)[:5]}")
        self.movable: List[Component] = [c for c in design.components if c.name in movable_set]
        index = {c.name: k for k, c in enumerate(self.movable)}
        masters = [library.master(c.master) for c in self.movable]
        self.width = np.array([m.width for m in masters], dtype=float)
        self.height = np.array([m.height for m in masters], dtype=float)
        self.is_macro = np.array([m.is_macro for m in masters], dtype=bool)

        self.grid = grid or DensityGrid(self.die_rect,
                                        self.params.bin_grid or default_bin_grid(len(self.movable)))
        self.gamma = self.params.gamma or 4.0 * (self.grid.bin_w + self.grid.bin_h) / 2
        fixed_rects = [library.rect_of(c) for c in design.components
                       if c.name not in movable_set and c.die is die and c.is_placed
                       and not is_shrunk(variant_of(c.master))]
        self.grid.add_fixed(fixed_rects)
        self.limit = self.grid.limit(self.params.target_density)

        # Small cells are stretched to sqrt(2) bins; density scaled to keep the area.
        self.eff_w = np.maximum(self.width, SQRT2 * self.grid.bin_w)
        self.eff_h = np.maximum(self.height, SQRT2 * self.grid.bin_h)
        self.scale = self.width * self.height / (self.eff_w * self.eff_h)
        # Macros count at target density so a fully covered bin is not overflow.
        self.scale = np.where(self.is_macro, self.scale * self.params.target_density, self.scale)
        self.total_area = float((self.width * self.height).sum())
        self.last_overflow = 0.0

        self._build_pins(design, library, index)

    def _build_pins(self, design: Design, library: Library, index: Dict[str, int]) -> None:
        components = design.component_map()
        ports = {p.name: p for p in design.io_ports}
        pin_net, pin_mov, off_x, off_y, fix_x, fix_y = [], [], [], [], [], []
        num_nets = 0
        skipped = 0
        for net in design.nets:
            terms = []
            for pin in net.pins:
                if pin.is_port:
                    port = ports.get(pin.pin)
                    if port is None or not port.is_placed:
                        skipped += 1
                        continue
                    terms.append((-1, 0.0, 0.0, port.x, port.y))
                    continue
                component = components[pin.component]
                k = index.get(component.name)
                if k is not None:
                    px, py = library.pin_offset(component.master, pin.pin, Orient.N)
                    terms.append((k, px - self.width[k] / 2, py - self.height[k] / 2, 0.0, 0.0))
                elif component.is_placed:
                    x, y = library.pin_position(component, pin.pin)
                    terms.append((-1, 0.0, 0.0, x, y))
                else:
                    skipped += 1
            if len(terms) < 2 or all(t[0] < 0 for t in terms):
                continue
            for k, ox, oy, fx, fy in terms:
                pin_net.append(num_nets)
                pin_mov.append(k)
                off_x.append(ox)
                off_y.append(oy)
                fix_x.append(fx)
                fix_y.append(fy)
            num_nets += 1
        if skipped:
            logger.debug(f"Ignored {skipped} terminals without a position.")
        self.num_nets = num_nets
        self.pin_net = np.asarray(pin_net, dtype=np.int64)
        self.pin_mov = np.asarray(pin_mov, dtype=np.int64)
        self.off_x = np.asarray(off_x, dtype=float)
        self.off_y = np.asarray(off_y, dtype=float)
        self.fix_x = np.asarray(fix_x, dtype=float)
        self.fix_y = np.asarray(fix_y, dtype=float)
        self.net_starts = np.flatnonzero(np.r_[True, np.diff(self.pin_net) != 0]) if num_nets else \
            np.zeros(0, dtype=np.int64)
        self.is_mov_pin = self.pin_mov >= 0
        self.mov_safe = np.maximum(self.pin_mov, 0)
        self.pins_per_cell = np.bincount(self.pin_mov[self.is_mov_pin], minlength=len(self.movable))

    @property
    def num_movable(self) -> int:
        return len(self.movable)

    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.array([c.x for c in self.movable], dtype=float) + self.width / 2
        y = np.array([c.y for c in self.movable], dtype=float) + self.height / 2
        return x, y

    def clamp(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        die = self.die_rect
        lo_x = die.lx + self.width / 2
        hi_x = np.maximum(lo_x, die.ux - self.width / 2)
        lo_y = die.ly + self.height / 2
        hi_y = np.maximum(lo_y, die.uy - self.height / 2)
        return np.clip(x, lo_x, hi_x), np.clip(y, lo_y, hi_y)

    def pin_positions(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        px = np.where(self.is_mov_pin, x[self.mov_safe] + self.off_x, self.fix_x)
        py = np.where(self.is_mov_pin, y[self.mov_safe] + self.off_y, self.fix_y)
        return px, py

    def _axis(self, pos: np.ndarray, model: str) -> Tuple[float, np.ndarray]:
        starts = self.net_starts
        net = self.pin_net
        gamma = self.gamma
        pmax = np.maximum.reduceat(pos, starts)
        pmin = np.minimum.reduceat(pos, starts)
        e_hi = np.exp((pos - pmax[net]) / gamma)
        e_lo = np.exp((pmin[net] - pos) / gamma)
        s_hi = np.add.reduceat(e_hi, starts)
        s_lo = np.add.reduceat(e_lo, starts)
        if model == "lse":
            value = float(np.sum(pmax + gamma * np.log(s_hi) - pmin + gamma * np.log(s_lo)))
            grad = e_hi / s_hi[net] - e_lo / s_lo[net]
            return value, grad
        w_hi = np.add.reduceat(pos * e_hi, starts) / s_hi
        w_lo = np.add.reduceat(pos * e_lo, starts) / s_lo
        value = float(np.sum(w_hi - w_lo))
        grad = (e_hi * (1.0 + (pos - w_hi[net]) / gamma) / s_hi[net]
                - e_lo * (1.0 - (pos - w_lo[net]) / gamma) / s_lo[net])
        return value, grad

    def wirelength(self, x: np.ndarray, y: np.ndarray,
                   model: Optional[str] = None) -> Tuple[float, np.ndarray, np.ndarray]:
        """Smoothed HPWL and its gradient with respect to the movable centres."""
        n = self.num_movable
        if self.num_nets == 0:
            return 0.0, np.zeros(n), np.zeros(n)
        model = model or self.params.wirelength_model
        px, py = self.pin_positions(x, y)
        vx, gx = self._axis(px, model)
        vy, gy = self._axis(py, model)
        mask = self.is_mov_pin
        grad_x = np.bincount(self.pin_mov[mask], weights=gx[mask], minlength=n)
        grad_y = np.bincount(self.pin_mov[mask], weights=gy[mask], minlength=n)
        return vx + vy, grad_x, grad_y

    def movable_usage(self, x: np.ndarray, y: np.ndarray):
        ox, dox = self.grid.overlap_x(x - self.eff_w / 2, x + self.eff_w / 2)
        oy, doy = self.grid.overlap_y(y - self.eff_h / 2, y + self.eff_h / 2)
        usage = (ox * self.scale[:, None]).T @ oy
        return usage, ox, dox, oy, doy

    def density(self, x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """Sum of squared bin overflow and its gradient with respect to the movable centres."""
        n = self.num_movable
        if n == 0:
            return 0.0, np.zeros(0), np.zeros(0)
        usage, ox, dox, oy, doy = self.movable_usage(x, y)
        over = np.maximum(0.0, usage - self.limit)
        value = float(np.sum(over * over))
        self.last_overflow = float(over.sum()) / self.total_area if self.total_area > 0 else 0.0
        g = 2.0 * over
        grad_x = self.scale * np.einsum("ci,ci->c", dox, oy @ g.T)
        grad_y = self.scale * np.einsum("cj,cj->c", doy, ox @ g)
        return value, grad_x, grad_y

    def overflow_ratio(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.num_movable == 0 or self.total_area <= 0:
            return 0.0
        usage = self.movable_usage(x, y)[0]
        return float(np.maximum(0.0, usage - self.limit).sum()) / self.total_area

    def exact_hpwl(self, x: np.ndarray, y: np.ndarray) -> float:
        if self.num_nets == 0:
            return 0.0
        px, py = self.pin_positions(x, y)
        starts = self.net_starts
        return float(np.sum(np.maximum.reduceat(px, starts) - np.minimum.reduceat(px, starts))
                     + np.sum(np.maximum.reduceat(py, starts) - np.minimum.reduceat(py, starts)))


class GlobalPlacer:
    """
    Momentum descent on wirelength + lambda * density with geometric lambda growth.

    Stops after `max_iters`, or once the overflow is at most `overflow_stop`
    and the objective has settled (a stalled step or a relative change below
    `tolerance`). A placement that starts under the overflow target keeps
    optimizing wirelength until it settles.
    """

    def __init__(self, problem: PlacementProblem,
                 on_iteration: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None):
        self.problem = problem
        self.on_iteration = on_iteration
        self.params = problem.params
        # (iteration, lambda, objective before, objective after) per accepted step
        self.history: List[Tuple[int, float, float, float]] = []
        self.iterations = 0
        self.final_overflow = 0.0

    def _initial_positions(self) -> Tuple[np.ndarray, np.ndarray]:
        p = self.problem
        rng = np.random.default_rng(self.params.seed)
        cx, cy = p.die_rect.center
        n = p.num_movable
        x = cx + rng.uniform(-1.0, 1.0, n) * p.grid.bin_w
        y = cy + rng.uniform(-1.0, 1.0, n) * p.grid.bin_h
        return p.clamp(x, y)

    def _evaluate(self, x, y):
        w, gwx, gwy = self.problem.wirelength(x, y)
        d, gdx, gdy = self.problem.density(x, y)
        return w, d, gwx, gwy, gdx, gdy, self.problem.last_overflow

    def run(self) -> Tuple[np.ndarray, np.ndarray]:
        p = self.problem
        params = self.params
        if p.num_movable == 0:
            return np.zeros(0), np.zeros(0)
        x, y = self._initial_positions()
        w, d, gwx, gwy, gdx, gdy, overflow = self._evaluate(x, y)

        if params.lambda0 is not None:
            lam = params.lambda0
        else:
            gw_norm = math.sqrt(float(gwx @ gwx + gwy @ gwy))
            gd_norm = math.sqrt(float(gdx @ gdx + gdy @ gdy))
            lam = params.lambda_ratio * gw_norm / gd_norm if gd_norm > 0 and gw_norm > 0 \
                else params.lambda_ratio
        step = params.initial_step or max(p.grid.bin_w, p.grid.bin_h)
        max_step = 4.0 * max(p.grid.bin_w, p.grid.bin_h)
        precond = np.maximum(1.0, p.pins_per_cell.astype(float))
        vx = np.zeros(p.num_movable)
        vy = np.zeros(p.num_movable)

        for it in range(params.max_iters):
            self.iterations = it + 1
            f = w + lam * d
            fresh = not (vx.any() or vy.any())
            vx = params.momentum * vx + (gwx + lam * gdx) / precond
            vy = params.momentum * vy + (gwy + lam * gdy) / precond
            norm = max(float(np.abs(vx).max()), float(np.abs(vy).max()))
            stalled = False
            rel = math.inf
            if norm == 0 or not math.isfinite(norm):
                stalled = True
                vx[:] = 0.0
                vy[:] = 0.0
            else:
                dx, dy = -vx / norm, -vy / norm
                trial = step
                accepted = False
                any_finite = False
                for _ in range(params.max_halvings):
                    nx, ny = p.clamp(x + trial * dx, y + trial * dy)
                    nw, nd, ngwx, ngwy, ngdx, ngdy, noverflow = self._evaluate(nx, ny)
                    nf = nw + lam * nd
                    if math.isfinite(nf):
                        any_finite = True
                        if nf <= f:
                            accepted = True
                            break
                    trial /= 2
                if accepted:
                    self.history.append((it, lam, f, nf))
                    rel = abs(f - nf) / max(abs(f), 1e-300)
                    x, y = nx, ny
                    w, d, gwx, gwy, gdx, gdy, overflow = nw, nd, ngwx, ngwy, ngdx, ngdy, noverflow
                    step = min(trial * 1.1, max_step)
                elif not any_finite:
                    raise PlacementDivergedError(
                        f"objective not finite after {params.max_halvings} step halvings at iteration {it}")
                else:
                    # A failed momentum step is retried along the plain gradient.
                    stalled = fresh
                    vx[:] = 0.0
                    vy[:] = 0.0

            if it % params.log_every == 0:
                logger.debug(f"iter {it}: wl={w:.4f} density={d:.4e} lambda={lam:.3e} "
                             f"overflow={overflow:.4f} step={step:.4f}")
            if self.on_iteration is not None:
                self.on_iteration(it, x, y)
            if overflow <= params.overflow_stop and (stalled or rel < params.tolerance):
                self.final_overflow = overflow
                break
            lam *= params.lambda_growth
            self.final_overflow = overflow
        return x, y


def _write_back(design: Design, problem: PlacementProblem, x: np.ndarray, y: np.ndarray) -> Design:
    units = design.units
    die = problem.die_rect
    moved = {c.name: k for k, c in enumerate(problem.movable)}
    for component in design.components:
        k = moved.get(component.name)
        if k is None:
            continue
        w, h = problem.width[k], problem.height[k]
        lx = min(max(x[k] - w / 2, die.lx), max(die.lx, die.ux - w))
        ly = min(max(y[k] - h / 2, die.ly), max(die.ly, die.uy - h))
        component.x = round(lx * units) / units
        component.y = round(ly * units) / units
        component.orient = Orient.N
        component.status = Status.PLACED
    return design


def global_place(design: Design, library: Library, movable: Iterable[str],
                 params: Optional[PlacerParams] = None, die: Die = Die.BOTTOM,
                 snapshot: Optional[SnapshotFn] = None, label: str = "gp") -> Design:
    """
    Place `movable` components on the `die` plane.

    Components of the plane that are not movable are density obstacles;
    pins of every placed component and port pull as fixed terminals. With
    `snapshot` and `params.snapshot_every`, the intermediate placement is
    handed to `snapshot` every that many iterations.
    """
    params = params or PlacerParams()
    result = design.clone()
    movable = list(movable)
    if not movable:
        return result
    problem = PlacementProblem(result, library, movable, params, die)
    on_iteration = None
    if snapshot is not None and params.snapshot_every:
        every = params.snapshot_every

        def on_iteration(it: int, x: np.ndarray, y: np.ndarray) -> None:
            if it % every == 0:
                snapshot(f"{label}_{it:05d}", _write_back(result.clone(), problem, x, y))
    placer = GlobalPlacer(problem, on_iteration)
    x, y = placer.run()
    logger.info(f"Global placement of {problem.num_movable} components on {die.value}: "
                f"{placer.iterations} iterations, overflow {placer.final_overflow:.4f}, "
                f"HPWL {problem.exact_hpwl(x, y):.2f} um")
    return _write_back(result, problem, x, y)


def hpwl_smooth(design: Design, library: Library, gamma: float, model: str = "wa",
                movable: Optional[Iterable[str]] = None,
                die: Die = Die.BOTTOM) -> Tuple[float, Dict[str, Tuple[float, float]]]:
    """Smoothed wirelength at the current placement and its per-component gradient."""
    names = list(movable) if movable is not None else [c.name for c in design.components if c.is_placed]
    params = PlacerParams(gamma=gamma, wirelength_model=model)
    problem = PlacementProblem(design, library, names, params, die)
    x, y = problem.centers()
    value, gx, gy = problem.wirelength(x, y)
    return value, {c.name: (float(gx[k]), float(gy[k])) for k, c in enumerate(problem.movable)}


def density_penalty(design: Design, library: Library, grid: DensityGrid, target: float = 0.8,
                    movable: Optional[Iterable[str]] = None,
                    die: Die = Die.BOTTOM) -> Tuple[float, Dict[str, Tuple[float, float]]]:
    """Squared bin overflow at the current placement and its per-component gradient."""
    names = list(movable) if movable is not None else \
        [c.name for c in design.components if c.die is die and c.is_placed]
    params = PlacerParams(target_density=target, bin_grid=grid.num_bins)
    problem = PlacementProblem(design, library, names, params, die, grid=grid)
    x, y = problem.centers()
    value, gx, gy = problem.density(x, y)
    return value, {c.name: (float(gx[k]), float(gy[k])) for k, c in enumerate(problem.movable)}


def scale_to_minimal(component: Component, library: Library) -> Component:
    """Swap to the shrunk variant anchored at the same centre; pin positions do not move."""
    variant = variant_of(component.master)
    if is_shrunk(variant):
        return component.model_copy()
    if variant is Variant.BASE:
        raise PlacementError(f"component '{component.name}' uses BASE master '{component.master}' "
                             f"which has no shrunk variant")
    shrunk = library.variant(component.master, shrunk_variant(variant))
    if shrunk is None:
        raise PlacementError(f"library has no shrunk variant of '{component.master}'")
    full = library.master(component.master)
    cx = component.x + full.width / 2
    cy = component.y + full.height / 2
    return component.model_copy(update={"master": shrunk.name, "x": cx - shrunk.width / 2,
                                        "y": cy - shrunk.height / 2})


def _project(design: Design, library: Library, names: Iterable[str], onto: Die) -> None:
    """Shrink the named components in place and move them to the `onto` plane."""
    wanted = set(names)
    for i, component in enumerate(design.components):
        if component.name in wanted:
            shrunk = scale_to_minimal(component, library)
            shrunk.die = onto
            design.components[i] = shrunk


def _copy_positions(target: Design, source: Design, names: Iterable[str], fixed: bool) -> None:
    placed = source.component_map()
    for component in target.components:
        if component.name in names:
            other = placed[component.name]
            component.x, component.y, component.orient = other.x, other.y, other.orient
            component.status = Status.FIXED if fixed else Status.PLACED


def place_cells_with_projection(design: Design, library: Library, params: PlacerParams,
                                die: Die = Die.BOTTOM, legalize: bool = True,
                                snapshot: Optional[SnapshotFn] = None) -> Design:
    """
    Place the cells of `die` with every macro fixed and the other die's
    macros projected onto it as shrunk instances.
    """
    other = Die.TOP if die is Die.BOTTOM else Die.BOTTOM
    result = design.clone()
    cells = [c.name for c in result.components if c.die is die and not library.is_macro(c)]
    if not cells:
        return result
    work = result.clone()
    _project(work, library, [c.name for c in work.components if c.die is other and library.is_macro(c)], die)
    work = global_place(work, library, cells, params, die, snapshot, f"cells_{die.value.lower()}")
    if legalize:
        work = legalizer.legalize(work, library, die)
    _copy_positions(result, work, set(cells), fixed=False)
    return result


def run_dmp(design: Design, library: Library, params: Optional[PlacerParams] = None,
            legalize: bool = True, snapshot: Optional[SnapshotFn] = None) -> Design:
    """
    Three-stage pseudo-3D placement.

    a. Shrink every BOTTOM component onto the TOP plane and place TOP macros
       together with them; keep only the TOP macro positions.
    b. Project the TOP macros shrunk onto BOTTOM and place BOTTOM macros with
       the BOTTOM cells; keep only the BOTTOM macro positions.
    c. With all macros fixed, place and legalize the BOTTOM cells.
    """
    params = params or PlacerParams()
    if not design.is_3d:
        raise PlacementError(f"design '{design.name}' is not partitioned into two dies")
    result = design.clone()
    top_macros = [c.name for c in result.components if c.die is Die.TOP and library.is_macro(c)]
    top_cells = [c.name for c in result.components if c.die is Die.TOP and not library.is_macro(c)]
    bottom_macros = [c.name for c in result.components if c.die is Die.BOTTOM and library.is_macro(c)]
    bottom_all = [c.name for c in result.components if c.die is Die.BOTTOM]

    logger.info(f"DMP stage a: {len(top_macros)} TOP macros with {len(bottom_all)} projected components.")
    if top_macros:
        work = result.clone()
        _project(work, library, bottom_all, Die.TOP)
        work = global_place(work, library, top_macros + top_cells + bottom_all, params, Die.TOP,
                            snapshot, "dmp_a")
        work = legalizer.legalize_macros(work, library, Die.TOP, top_macros)
        _copy_positions(result, work, set(top_macros), fixed=True)

    logger.info(f"DMP stage b: {len(bottom_macros)} BOTTOM macros.")
    if bottom_macros:
        work = result.clone()
        _project(work, library, top_macros, Die.BOTTOM)
        movable = [c.name for c in work.components if c.die is Die.BOTTOM and c.name not in top_macros]
        work = global_place(work, library, movable, params, Die.BOTTOM, snapshot, "dmp_b")
        work = legalizer.legalize_macros(work, library, Die.BOTTOM, bottom_macros)
        _copy_positions(result, work, set(bottom_macros), fixed=True)

    logger.info("DMP stage c: BOTTOM cell placement.")
    result = place_cells_with_projection(result, library, params, Die.BOTTOM, legalize, snapshot)
    if top_cells:
        result = place_cells_with_projection(result, library, params, Die.TOP, legalize, snapshot)
    return result


def run_mixed_2d(design: Design, library: Library, params: Optional[PlacerParams] = None,
                 legalize: bool = True) -> Design:
    """Single-die baseline: mixed-size placement, macro legalization, then cells."""
    params = params or PlacerParams()
    result = design.clone()
    macros = [c.name for c in result.components if library.is_macro(c)]
    if macros:
        work = global_place(result, library, [c.name for c in result.components], params, Die.BOTTOM)
        work = legalizer.legalize_macros(work, library, Die.BOTTOM, macros)
        _copy_positions(result, work, set(macros), fixed=True)
    return place_cells_with_projection(result, library, params, Die.BOTTOM, legalize)
