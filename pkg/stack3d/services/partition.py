"""
Tier partition service.

Memory-on-logic assignment: standard cells stay on their die (BOTTOM for a
2D netlist) and each macro is assigned TOP (1) or BOTTOM (0) by a (1+1)
evolutionary search with annealing-style acceptance. Also converts the 2D
netlist into the 3D one and propagates die assignments to I/O ports.
"""
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .. import config
from ..config import Stack3dError
from ..models import Design, Die, DieSide, Library, Technology, die_variant
from ..params import PartitionParams

logger = config.logger

EXHAUSTIVE_LIMIT = 20
_CHUNK = 4096


class PartitionError(Stack3dError):
    """Raised when a partition cannot be computed or applied."""
    exit_code = 1


class PartitionAssignment(BaseModel):
    """Per-macro die bits (1 = TOP) with the statistics they induce."""
    macro_names: List[str] = Field(default_factory=list)
    macro_bits: List[int] = Field(default_factory=list)
    cut_nets: int = 0
    util_top: float = 0.0
    util_bottom: float = 0.0
    fitness: float = 0.0
    method: str = "ea"
    trace: List[float] = Field(default_factory=list, exclude=True,
                               description="Best-so-far fitness per iteration")

    def die_map(self) -> Dict[str, Die]:
        return {name: Die.TOP if bit else Die.BOTTOM
                for name, bit in zip(self.macro_names, self.macro_bits)}

    def to_dict(self) -> Dict:
        """JSON form with an explicit macro to die map."""
        data = self.model_dump()
        data["dies"] = {name: die.value for name, die in self.die_map().items()}
        return data


class PartitionProblem:
    """Vectorized cut and utilization evaluation for one design."""

    def __init__(self, design: Design, library: Library):
        components = design.components
        self.macro_names = [c.name for c in components if library.is_macro(c)]
        macro_index = {name: i for i, name in enumerate(self.macro_names)}
        comp_die = {c.name: c.die for c in components}
        port_die = {p.name: p.die for p in design.io_ports}

        self.num_nets = len(design.nets)
        self.fixed_top = np.zeros(self.num_nets, dtype=bool)
        self.fixed_bottom = np.zeros(self.num_nets, dtype=bool)
        pin_net: List[int] = []
        pin_macro: List[int] = []
        for j, net in enumerate(design.nets):
            for pin in net.pins:
                if pin.is_port:
                    die = port_die.get(pin.pin)
                    if die is None:
                        raise PartitionError(f"net '{net.name}' references unknown port '{pin.pin}'")
                elif pin.component in macro_index:
                    pin_net.append(j)
                    pin_macro.append(macro_index[pin.component])
                    continue
                else:
                    die = comp_die.get(pin.component)
                    if die is None:
                        raise PartitionError(
                            f"net '{net.name}' references unknown component '{pin.component}'")
                if die is Die.TOP:
                    self.fixed_top[j] = True
                else:
                    self.fixed_bottom[j] = True
        self.pin_net = np.asarray(pin_net, dtype=np.int64)
        self.pin_macro = np.asarray(pin_macro, dtype=np.int64)

        die = design.die_bottom
        if die is None or die.area <= 0:
            raise PartitionError(f"design '{design.name}' has no die outline")
        self.die_area = die.area
        areas = {c.name: library.master(c.master).area for c in components}
        self.macro_area = np.array([areas[name] for name in self.macro_names], dtype=float)
        self.cell_area_top = sum(areas[c.name] for c in components
                                 if c.name not in macro_index and c.die is Die.TOP)
        self.cell_area_bottom = sum(areas[c.name] for c in components
                                    if c.name not in macro_index and c.die is not Die.TOP)

        # Dense incidence for batched evaluation.
        self.incidence = np.zeros((len(self.macro_names), self.num_nets))
        if len(pin_net):
            np.add.at(self.incidence, (self.pin_macro, self.pin_net), 1.0)

    @property
    def num_macros(self) -> int:
        return len(self.macro_names)

    def cut(self, bits: np.ndarray) -> int:
        bits = np.asarray(bits, dtype=float)
        top = self.fixed_top.copy()
        bottom = self.fixed_bottom.copy()
        if len(self.pin_net):
            on_top = bits[self.pin_macro]
            top |= np.bincount(self.pin_net, weights=on_top, minlength=self.num_nets) > 0
            bottom |= np.bincount(self.pin_net, weights=1.0 - on_top, minlength=self.num_nets) > 0
        return int(np.count_nonzero(top & bottom))

    def utilization(self, bits: np.ndarray) -> tuple:
        bits = np.asarray(bits, dtype=float)
        top_macros = float(self.macro_area @ bits) if self.num_macros else 0.0
        bottom_macros = float(self.macro_area.sum()) - top_macros
        return ((self.cell_area_top + top_macros) / self.die_area,
                (self.cell_area_bottom + bottom_macros) / self.die_area)

    def fitness(self, bits: np.ndarray, params: PartitionParams) -> float:
        util_top, util_bottom = self.utilization(bits)
        return self._combine(self.cut(bits), util_top, util_bottom, params)

    def _combine(self, cut, util_top, util_bottom, params: PartitionParams):
        return params.w_cut * cut / max(1, self.num_nets) + params.w_util * abs(util_top - util_bottom)

    def batch_fitness(self, bits: np.ndarray, params: PartitionParams) -> np.ndarray:
        """Fitness of every row of a (k, num_macros) 0/1 matrix."""
        bits = np.asarray(bits, dtype=float)
        top_counts = bits @ self.incidence
        bottom_counts = (1.0 - bits) @ self.incidence
        top = self.fixed_top[None, :] | (top_counts > 0)
        bottom = self.fixed_bottom[None, :] | (bottom_counts > 0)
        cuts = np.count_nonzero(top & bottom, axis=1)
        top_macros = bits @ self.macro_area
        util_top = (self.cell_area_top + top_macros) / self.die_area
        util_bottom = (self.cell_area_bottom + self.macro_area.sum() - top_macros) / self.die_area
        return self._combine(cuts, util_top, util_bottom, params)

    def assignment(self, bits: np.ndarray, params: PartitionParams, method: str,
                   trace: Optional[List[float]] = None) -> PartitionAssignment:
        bits = np.asarray(bits, dtype=np.int64)
        cut = self.cut(bits)
        util_top, util_bottom = self.utilization(bits)
        return PartitionAssignment(
            macro_names=list(self.macro_names), macro_bits=[int(b) for b in bits],
            cut_nets=cut, util_top=util_top, util_bottom=util_bottom,
            fitness=self._combine(cut, util_top, util_bottom, params), method=method,
            trace=trace or [],
        )


def _bits_for(design: Design, library: Library, macro_bits: Sequence[int]) -> PartitionProblem:
    problem = PartitionProblem(design, library)
    if len(macro_bits) != problem.num_macros:
        raise PartitionError(f"expected {problem.num_macros} macro bits, got {len(macro_bits)}")
    return problem


def cut_value(design: Design, library: Library, macro_bits: Sequence[int]) -> int:
    """Number of nets with terminals on both dies under `macro_bits`."""
    return _bits_for(design, library, macro_bits).cut(np.asarray(macro_bits))


def fitness(design: Design, library: Library, macro_bits: Sequence[int],
            params: Optional[PartitionParams] = None) -> float:
    """w_cut * cut / max(1, |nets|) + w_util * |util_top - util_bottom|."""
    params = params or PartitionParams()
    return _bits_for(design, library, macro_bits).fitness(np.asarray(macro_bits), params)


def partition_memory_on_logic(design: Design, library: Library,
                              params: Optional[PartitionParams] = None) -> PartitionAssignment:
    """
    Assign macros to dies starting from all-TOP.

    Each iteration flips every bit with probability 1/n (redrawn until at
    least one bit flips). Improving offspring are always accepted, worse ones
    with probability exp(-delta / T_k), T_k = t0 * alpha^k. The best
    assignment ever seen is returned.
    """
    params = params or PartitionParams()
    if params.method == "exhaustive":
        return partition_exhaustive(design, library, params)

    problem = PartitionProblem(design, library)
    n = problem.num_macros
    rng = np.random.default_rng(params.seed)
    current = np.ones(n, dtype=np.int64)
    current_fit = problem.fitness(current, params)
    best, best_fit = current.copy(), current_fit
    trace: List[float] = []

    if n > 0:
        rate = 1.0 / n
        for k in range(params.iterations):
            temperature = params.t0 * params.alpha ** k
            mask = rng.random(n) < rate
            while not mask.any():
                mask = rng.random(n) < rate
            child = current ^ mask
            child_fit = problem.fitness(child, params)
            delta = child_fit - current_fit
            # T_k underflows to 0 for small alpha; worse offspring are then rejected.
            if delta <= 0 or (temperature > 0 and rng.random() < math.exp(-delta / temperature)):
                current, current_fit = child, child_fit
                if current_fit < best_fit:
                    best, best_fit = current.copy(), current_fit
            trace.append(best_fit)
            if k % 500 == 0:
                logger.debug(f"partition iter {k}: T={temperature:.3e} current={current_fit:.6f} best={best_fit:.6f}")

    result = problem.assignment(best, params, "ea", trace)
    logger.info(f"Partitioned {n} macros: {sum(result.macro_bits)} on TOP, cut={result.cut_nets}, "
                f"util_top={result.util_top:.3f}, util_bottom={result.util_bottom:.3f}, "
                f"fitness={result.fitness:.6f}")
    return result


def partition_exhaustive(design: Design, library: Library,
                         params: Optional[PartitionParams] = None) -> PartitionAssignment:
    """Exact minimum over all 2^n assignments; first minimum in integer order wins."""
    params = params or PartitionParams()
    problem = PartitionProblem(design, library)
    n = problem.num_macros
    if n > EXHAUSTIVE_LIMIT:
        raise PartitionError(f"exhaustive partition supports at most {EXHAUSTIVE_LIMIT} macros, got {n}")
    total = 1 << n
    shifts = np.arange(n, dtype=np.int64)
    best_index, best_fit = 0, math.inf
    for start in range(0, total, _CHUNK):
        indices = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        bits = (indices[:, None] >> shifts[None, :]) & 1
        values = problem.batch_fitness(bits, params)
        i = int(np.argmin(values))
        if values[i] < best_fit:
            best_index, best_fit = int(indices[i]), float(values[i])
    best = (best_index >> shifts) & 1
    result = problem.assignment(best, params, "exhaustive")
    logger.info(f"Exhaustive partition over {total} assignments: fitness={result.fitness:.6f}")
    return result


def apply_partition(design: Design, assignment: PartitionAssignment, library3d: Library) -> Design:
    """Swap every component to its die-variant master and make the design 3D."""
    dies = assignment.die_map()
    result = design.clone()
    for component in result.components:
        die = dies.get(component.name, component.die)
        master = library3d.variant(component.master, die_variant(die))
        if master is None:
            raise PartitionError(f"library has no {die.value} variant of '{component.master}'")
        component.master = master.name
        component.die = die
    if result.die_bottom is None:
        raise PartitionError(f"design '{design.name}' has no die outline")
    result.die_top = result.die_bottom
    logger.info(f"Applied partition: {sum(1 for c in result.components if c.die is Die.TOP)} "
                f"components on TOP, {sum(1 for c in result.components if c.die is Die.BOTTOM)} on BOTTOM.")
    return result


def _mirror_layer(technology: Optional[Technology], layer: Optional[str], die: Die) -> Optional[str]:
    if technology is None or layer is None or not technology.is_3d:
        return layer
    info = technology.layer(layer)
    if info is None:
        return layer
    want = DieSide.TOP if die is Die.TOP else DieSide.BOTTOM
    if info.die_side is want:
        return layer
    layers = technology.layers
    center = layers.index(technology.bond_layer)
    j = 2 * center - layers.index(info)
    return layers[j].name if 0 <= j < len(layers) else layer


def assign_io_tiers(design: Design, technology: Optional[Technology] = None) -> Design:
    """
    Put each port on the majority die of the component pins it connects to.

    Ties go to BOTTOM; a port without component connections stays on
    BOTTOM. With a 3D technology the port layer moves to its mirror image
    when the die changes.
    """
    dies = {c.name: c.die for c in design.components}
    votes: Dict[str, List[int]] = {p.name: [0, 0] for p in design.io_ports}
    for net in design.nets:
        ports = [p.pin for p in net.pins if p.is_port]
        if not ports:
            continue
        top = sum(1 for p in net.pins if not p.is_port and dies.get(p.component) is Die.TOP)
        bottom = sum(1 for p in net.pins if not p.is_port and dies.get(p.component) is Die.BOTTOM)
        for name in ports:
            if name in votes:
                votes[name][0] += top
                votes[name][1] += bottom

    result = design.clone()
    moved = 0
    for port in result.io_ports:
        top, bottom = votes[port.name]
        if top == 0 and bottom == 0:
            logger.warning(f"Port '{port.name}' has no component connection; keeping it on BOTTOM.")
            die = Die.BOTTOM
        else:
            die = Die.TOP if top > bottom else Die.BOTTOM
        if die is not port.die:
            moved += 1
        port.layer = _mirror_layer(technology, port.layer, die)
        port.die = die
    logger.info(f"Assigned I/O tiers: {sum(1 for p in result.io_ports if p.die is Die.TOP)} of "
                f"{len(result.io_ports)} ports on TOP ({moved} moved).")
    return result
