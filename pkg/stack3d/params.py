"""
Pydantic parameter blocks for every flow stage.

Run-level settings live here; process-level settings (threads, cache dir,
log level) are read from the environment by `config.AppConfig`.
"""
from enum import Enum
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Pdk3dConfig(BaseModel):
    """Geometry of the bond layer and the shrunk cell class."""
    model_config = ConfigDict(extra="forbid")

    hbt_size: float = Field(0.5, gt=0, description="HBT square cut size, um")
    # 1.5 um follows the PDK description; the routing discussion quotes 1 um.
    hbt_pitch: float = Field(1.5, gt=0, description="HBT pitch, um")
    shrunk_height: float = Field(1.4, gt=0, description="Shrunk master height (one row), um")
    shrunk_width: float = Field(0.19, gt=0, description="Shrunk master width (one site), um")

    @model_validator(mode="after")
    def _check_pitch(self) -> "Pdk3dConfig":
        if self.hbt_pitch < self.hbt_size:
            raise ValueError("hbt_pitch must be at least hbt_size")
        return self


class PartitionParams(BaseModel):
    """Weights and schedule of the macro relocation search."""
    model_config = ConfigDict(extra="forbid")

    w_cut: float = Field(0.5, ge=0, le=1, description="Weight of the normalized cut term")
    w_util: float = Field(0.5, ge=0, le=1, description="Weight of the utilization difference term")
    iterations: int = Field(2000, ge=0)
    t0: float = Field(0.1, gt=0, description="Initial acceptance temperature")
    alpha: float = Field(0.995, gt=0, lt=1, description="Geometric cooling factor")
    seed: int = 1
    method: Literal["ea", "exhaustive"] = "ea"

    @model_validator(mode="after")
    def _check_weights(self) -> "PartitionParams":
        if abs(self.w_cut + self.w_util - 1.0) > 1e-9:
            raise ValueError("w_cut + w_util must equal 1")
        return self

    @classmethod
    def with_cut_weight(cls, w_cut: float, **kwargs) -> "PartitionParams":
        return cls(w_cut=w_cut, w_util=1.0 - w_cut, **kwargs)


class TilingParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    height_target: float = Field(0.8, gt=0, lt=1, description="Skyline height target as a fraction of die height")
    halo_step: float = Field(0.5, gt=0, description="Halo sweep step, um")
    halo_max: float = Field(50.0, ge=0, description="Largest halo tried, um")


class PlacerParams(BaseModel):
    """Analytical placer settings; None means derived from the design."""
    model_config = ConfigDict(extra="forbid")

    gamma: Optional[float] = Field(None, gt=0, description="Wirelength smoothing, um (default 4x bin width)")
    bin_grid: Optional[int] = Field(None, ge=1, le=512, description="Bins per side (default up to 64)")
    lambda0: Optional[float] = Field(None, gt=0, description="Initial density weight (default from gradient ratio)")
    lambda_ratio: float = Field(0.1, gt=0, description="Initial density/wirelength gradient norm ratio")
    lambda_growth: float = Field(1.05, ge=1.0)
    target_density: float = Field(0.8, gt=0, le=1)
    max_iters: int = Field(1000, ge=0)
    overflow_stop: float = Field(0.07, gt=0)
    tolerance: float = Field(1e-5, gt=0, description="Relative objective change treated as converged")
    momentum: float = Field(0.9, ge=0, lt=1)
    initial_step: Optional[float] = Field(None, gt=0, description="Initial step, um (default one bin)")
    max_halvings: int = Field(20, ge=1)
    wirelength_model: Literal["wa", "lse"] = "wa"
    seed: int = 1
    log_every: int = Field(50, ge=1)
    snapshot_every: Optional[int] = Field(None, ge=1, description="Iterations between intermediate DEF dumps")


class ThermalParams(BaseModel):
    """Grid thermal model; resistances are quoted for a 10x10 grid on a 1 mm^2 die."""
    model_config = ConfigDict(extra="forbid")

    grid_n: int = Field(10, ge=1)
    power_scale: float = Field(10.0, ge=0)
    ambient_c: float = 45.0
    r_lateral: float = Field(0.02, gt=0, description="K/W between adjacent square cells")
    r_vertical: float = Field(0.5, gt=0, description="K/W between stacked cells of the reference grid")
    r_sink: float = Field(2.0, gt=0, description="K/W from a bottom cell of the reference grid to ambient")
    r_top_sink: Optional[float] = Field(None, gt=0, description="K/W from a top cell to ambient (None = adiabatic)")
    solver: Literal["auto", "direct", "gauss_seidel"] = "auto"
    tolerance: float = Field(1e-9, gt=0)
    max_sweeps: int = Field(200000, ge=1)


class FloorplanParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    utilization: float = Field(0.5, gt=0, le=1)
    aspect: float = Field(1.0, gt=0, description="Die height / width")
    io_pitch: float = Field(1.0, gt=0, description="Minimum spacing of boundary I/O sites, um")
    io_layer: Optional[str] = Field(None, description="Port layer (default: third routing layer)")


class FlowKind(str, Enum):
    FLOW_2D = "FLOW_2D"
    FLOW_3D_TILING = "FLOW_3D_TILING"
    FLOW_3D_DMP = "FLOW_3D_DMP"


class GeneratorParams(BaseModel):
    """Synthetic design used when no DEF is given."""
    model_config = ConfigDict(extra="forbid")

    preset: Literal["tiny", "small", "medium", "ariane-like"] = "small"
    seed: int = 1


class FlowConfig(BaseModel):
    """Full configuration of one flow run. `seed` overrides the partition, placer and I/O seeds."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    tech_lef: Optional[Path] = None
    cells_lef: Optional[Path] = None
    def_file: Optional[Path] = Field(None, alias="def", description="Input netlist DEF (2D masters)")
    generator: Optional[GeneratorParams] = None
    flow: FlowKind = FlowKind.FLOW_3D_DMP
    seed: int = 1
    out_dir: Path = Path("out")
    record_runtime: bool = False
    power_file: Optional[Path] = None

    floorplan: FloorplanParams = Field(default_factory=FloorplanParams)
    pdk3d: Pdk3dConfig = Field(default_factory=Pdk3dConfig)
    partition: PartitionParams = Field(default_factory=PartitionParams)
    tiling: TilingParams = Field(default_factory=TilingParams)
    placer: PlacerParams = Field(default_factory=PlacerParams)
    thermal: ThermalParams = Field(default_factory=ThermalParams)

    @model_validator(mode="after")
    def _check_inputs(self) -> "FlowConfig":
        if self.generator is None:
            missing = [name for name, value in
                       (("tech_lef", self.tech_lef), ("cells_lef", self.cells_lef), ("def", self.def_file))
                       if value is None]
            if missing:
                raise ValueError(f"missing inputs {missing} (or give a 'generator' block)")
            for path in (self.tech_lef, self.cells_lef, self.def_file):
                if not Path(path).exists():
                    raise ValueError(f"input path does not exist: {path}")
        return self
