"""
Thermal service.

Steady-state grid model of the die stack: each die is a grid_n x grid_n
plane of nodes joined laterally, the planes are joined vertically, and the
bottom plane (optionally also the top one) ties to the ambient through the
heat sink. The system is solved for the temperature rise over ambient.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, spsolve_triangular
from pydantic import BaseModel, ConfigDict

from .. import config
from ..config import Stack3dError
from ..models import Design, Die, Library, Rect, is_shrunk, variant_of
from ..params import ThermalParams
from . import metrics
from .placer import DensityGrid

logger = config.logger

# Resistance defaults are quoted for square cells of this area (10 x 10 grid on 1 mm^2).
REFERENCE_CELL_AREA_UM2 = 1e4
DIRECT_SOLVE_LIMIT = 1000


class ThermalError(Stack3dError):
    exit_code = 1


class ThermalConvergenceError(ThermalError):
    """Raised when the iterative solver hits its sweep cap."""
    exit_code = 4


def aggregate_power(design: Design, library: Library, power_map: Dict[str, float],
                    grid_n: int = 10, scale: float = 10.0) -> np.ndarray:
    """
    Scaled component power split over bins by area overlap.

    Returns an array of shape (planes, grid_n, grid_n) indexed
    [plane, x bin, y bin]; plane 0 is the bottom die.
    """
    if design.die_bottom is None:
        raise ThermalError(f"design '{design.name}' has no die outline")
    dies = [Die.BOTTOM, Die.TOP] if design.is_3d else [Die.BOTTOM]
    planes = np.zeros((len(dies), grid_n, grid_n))
    for k, die in enumerate(dies):
        die_rect = design.die_rect(die)
        grid = DensityGrid(die_rect, grid_n)
        rects: List[Rect] = []
        weights: List[float] = []
        for component in design.components:
            if component.die is not die or is_shrunk(variant_of(component.master)):
                continue
            watts = power_map.get(component.name, 0.0)
            if watts == 0:
                continue
            if not component.is_placed:
                raise ThermalError(f"component '{component.name}' is not placed")
            rect = library.rect_of(component)
            clipped = Rect(lx=min(max(rect.lx, die_rect.lx), die_rect.ux),
                           ly=min(max(rect.ly, die_rect.ly), die_rect.uy),
                           ux=max(min(rect.ux, die_rect.ux), die_rect.lx),
                           uy=max(min(rect.uy, die_rect.uy), die_rect.ly))
            if clipped.area <= 0:
                # Degenerate after clipping: a tiny box at the clipped point.
                cx, cy = clipped.center
                eps = 1e-6
                clipped = Rect(lx=max(die_rect.lx, cx - eps), ly=max(die_rect.ly, cy - eps),
                               ux=min(die_rect.ux, cx + eps), uy=min(die_rect.uy, cy + eps))
            rects.append(clipped)
            weights.append(watts * scale / clipped.area)
        if rects:
            planes[k] = grid.usage(rects, weights)
    return planes


class ThermalNetwork(BaseModel):
    """Conductance system over grid nodes with the ambient eliminated."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid_n: int
    planes: int
    conductance: sp.csr_matrix
    sink: np.ndarray
    power: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.planes * self.grid_n * self.grid_n


class ThermalResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    temperatures: np.ndarray
    ambient_c: float
    residual: float
    method: str
    sweeps: int = 0
    heat_to_ambient: float = 0.0

    @property
    def t_max(self) -> float:
        return float(self.temperatures.max())

    def to_dict(self) -> Dict:
        names = ["bottom", "top"]
        return {
            "t_max_c": round(self.t_max, 9),
            "ambient_c": self.ambient_c,
            "grid_n": int(self.temperatures.shape[1]),
            "method": self.method,
            "planes": {names[k]: np.round(self.temperatures[k], 9).tolist()
                       for k in range(self.temperatures.shape[0])},
        }


def _node(plane: int, i: int, j: int, n: int) -> int:
    return (plane * n + i) * n + j


def build_network(power: np.ndarray, die: Rect, params: Optional[ThermalParams] = None) -> ThermalNetwork:
    """
    Assemble the conductance matrix G (ambient eliminated) for `power` of
    shape (planes, n, n).

    Lateral resistance scales with the cell aspect ratio; vertical and sink
    resistances scale inversely with cell area relative to the reference
    grid.
    """
    params = params or ThermalParams()
    planes, n, _ = power.shape
    cell_w, cell_h = die.width / n, die.height / n
    area_ratio = REFERENCE_CELL_AREA_UM2 / (cell_w * cell_h)
    g_x = 1.0 / (params.r_lateral * cell_w / cell_h)
    g_y = 1.0 / (params.r_lateral * cell_h / cell_w)
    g_z = 1.0 / (params.r_vertical * area_ratio)
    g_sink = 1.0 / (params.r_sink * area_ratio)
    g_top_sink = 1.0 / (params.r_top_sink * area_ratio) if params.r_top_sink else 0.0

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []

    def couple(a: int, b: int, g: float) -> None:
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        vals.extend((g, g, -g, -g))

    for p in range(planes):
        for i in range(n):
            for j in range(n):
                node = _node(p, i, j, n)
                if i + 1 < n:
                    couple(node, _node(p, i + 1, j, n), g_x)
                if j + 1 < n:
                    couple(node, _node(p, i, j + 1, n), g_y)
                if p + 1 < planes:
                    couple(node, _node(p + 1, i, j, n), g_z)

    total = planes * n * n
    sink = np.zeros(total)
    sink[: n * n] = g_sink
    if planes > 1:
        sink[(planes - 1) * n * n:] += g_top_sink
    conductance = sp.coo_matrix((vals, (rows, cols)), shape=(total, total)).tocsr()
    conductance = (conductance + sp.diags(sink)).tocsr()
    return ThermalNetwork(grid_n=n, planes=planes, conductance=conductance, sink=sink,
                          power=power.reshape(-1).astype(float))


def _gauss_seidel(network: ThermalNetwork, tol: float, max_sweeps: int) -> Tuple[np.ndarray, int, float]:
    g = network.conductance
    p = network.power
    lower = sp.tril(g, format="csr")
    upper = sp.triu(g, k=1, format="csr")
    theta = np.zeros_like(p)
    bound = tol * max(1.0, float(np.abs(p).max()))
    residual = float(np.abs(p).max())
    for sweep in range(1, max_sweeps + 1):
        theta = spsolve_triangular(lower, p - upper @ theta, lower=True)
        if sweep % 10 == 0 or sweep == max_sweeps:
            residual = float(np.abs(g @ theta - p).max())
            if residual <= bound:
                return theta, sweep, residual
    raise ThermalConvergenceError(
        f"Gauss-Seidel did not converge in {max_sweeps} sweeps (residual {residual:.3e})")


def solve_steady(network: ThermalNetwork, params: Optional[ThermalParams] = None) -> ThermalResult:
    """Solve G * theta = P and return node temperatures ambient + theta."""
    params = params or ThermalParams()
    shape = (network.planes, network.grid_n, network.grid_n)
    if not np.any(network.power):
        return ThermalResult(temperatures=np.full(shape, params.ambient_c), ambient_c=params.ambient_c,
                             residual=0.0, method="zero-power")
    if not np.any(network.sink):
        raise ThermalError("network has no path to ambient")

    method = params.solver
    if method == "auto":
        method = "direct" if network.num_nodes <= DIRECT_SOLVE_LIMIT else "gauss_seidel"
    sweeps = 0
    if method == "direct":
        theta = np.asarray(spsolve(network.conductance.tocsc(), network.power), dtype=float)
        residual = float(np.abs(network.conductance @ theta - network.power).max())
        bound = params.tolerance * max(1.0, float(np.abs(network.power).max()))
        if not np.all(np.isfinite(theta)) or residual > bound:
            raise ThermalConvergenceError(f"direct solve residual {residual:.3e} exceeds {bound:.3e}")
    else:
        theta, sweeps, residual = _gauss_seidel(network, params.tolerance, params.max_sweeps)

    heat = float(network.sink @ theta)
    result = ThermalResult(temperatures=params.ambient_c + theta.reshape(shape), ambient_c=params.ambient_c,
                           residual=residual, method=method, sweeps=sweeps, heat_to_ambient=heat)
    logger.info(f"Thermal solve ({method}, {network.num_nodes} nodes): T_max={result.t_max:.3f} C, "
                f"residual {residual:.2e}")
    return result


def simulate(design: Design, library: Library, power_map: Optional[Dict[str, float]] = None,
             params: Optional[ThermalParams] = None) -> ThermalResult:
    """Power proxy, aggregation, network and solve for one placed design."""
    params = params or ThermalParams()
    powers = metrics.component_power(design, library, power_map)
    grid = aggregate_power(design, library, powers, params.grid_n, params.power_scale)
    network = build_network(grid, design.die_bottom, params)
    return solve_steady(network, params)


def compare_2d_3d(design2d: Design, library2d: Library, design3d: Design, library3d: Library,
                  params: Optional[ThermalParams] = None,
                  power_map: Optional[Dict[str, float]] = None) -> Tuple[float, float]:
    """Peak temperatures of a 2D and a 3D implementation under identical parameters."""
    params = params or ThermalParams()
    t2 = simulate(design2d, library2d, power_map, params).t_max
    t3 = simulate(design3d, library3d, power_map, params).t_max
    logger.info(f"Peak temperature 2D {t2:.3f} C vs 3D {t3:.3f} C")
    return t2, t3
