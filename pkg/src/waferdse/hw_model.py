"""Wafer / die / core hardware template and the area-feasibility enumerator.

DRAM chiplets attach along the vertical edges of each compute die, stacked
into columns. A column holds ``floor(die.height / dram.height)`` chiplets, so
the horizontal footprint of one die slot is ``die.width + columns * dram.width``.
Edge IO is split between DRAM interfaces and die-to-die links.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

DEFAULT_WAFER_MM = 198.0
MAX_CHIPLETS_PER_SIDE = 6


@dataclass(frozen=True)
class CoreSpec:
    peak_flops: float
    sram_bytes: int
    frequency: float = 2.0e9

    def __post_init__(self):
        if self.peak_flops <= 0 or self.sram_bytes <= 0 or self.frequency <= 0:
            raise ValueError(f"CoreSpec fields must be positive: {self}")


@dataclass(frozen=True)
class DieSpec:
    width_mm: float
    height_mm: float
    core_rows: int
    core_cols: int
    core: CoreSpec
    edge_io_bandwidth: float = 12e12
    dram_io_fraction: float = 0.25
    name: str = ""

    def __post_init__(self):
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ValueError("die dimensions must be positive")
        if self.core_rows <= 0 or self.core_cols <= 0:
            raise ValueError("core array must be non-empty")
        if not 0.0 <= self.dram_io_fraction <= 1.0:
            raise ValueError("dram_io_fraction must lie in [0, 1]")

    @property
    def num_cores(self) -> int:
        return self.core_rows * self.core_cols

    @property
    def compute_flops(self) -> float:
        return self.num_cores * self.core.peak_flops

    @property
    def sram_bytes(self) -> int:
        return self.num_cores * self.core.sram_bytes


@dataclass(frozen=True)
class DramChipletSpec:
    width_mm: float
    height_mm: float
    capacity_bytes: int
    bandwidth: float
    name: str = ""

    def __post_init__(self):
        if min(self.width_mm, self.height_mm, self.capacity_bytes, self.bandwidth) <= 0:
            raise ValueError(f"DramChipletSpec fields must be positive: {self}")


@dataclass(frozen=True)
class WaferConfig:
    grid_x: int
    grid_y: int
    die: DieSpec
    dram_chiplets_per_die: int
    dram: DramChipletSpec
    d2d_bandwidth: float
    d2d_latency: float = 1e-7
    wafer_width_mm: float = DEFAULT_WAFER_MM
    wafer_height_mm: float = DEFAULT_WAFER_MM
    name: str = ""
    # free-form labels such as a "comp power" figure; never used in math
    labels: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @property
    def num_dies(self) -> int:
        return self.grid_x * self.grid_y

    @property
    def dram_capacity_per_die(self) -> int:
        return self.dram_chiplets_per_die * self.dram.capacity_bytes

    @property
    def dram_bandwidth_per_die(self) -> float:
        return self.dram_chiplets_per_die * self.dram.bandwidth

    @property
    def total_dram_bytes(self) -> int:
        return self.num_dies * self.dram_capacity_per_die

    @property
    def total_flops(self) -> float:
        return self.num_dies * self.die.compute_flops

    def chiplets_per_column(self) -> int:
        return max(1, math.floor(self.die.height_mm / self.dram.height_mm + 1e-9))

    def chiplet_columns(self) -> int:
        if self.dram_chiplets_per_die == 0:
            return 0
        return math.ceil(self.dram_chiplets_per_die / self.chiplets_per_column())

    def slot_width_mm(self) -> float:
        return self.die.width_mm + self.chiplet_columns() * self.dram.width_mm

    def slot_height_mm(self) -> float:
        stacked = min(self.dram_chiplets_per_die, self.chiplets_per_column()) * self.dram.height_mm
        return max(self.die.height_mm, stacked)


@dataclass(frozen=True)
class Verdict:
    feasible: bool
    violations: tuple[str, ...] = ()

    def __bool__(self):
        return self.feasible


def derive_die_metrics(die: DieSpec) -> tuple[float, int]:
    """Return ``(compute_flops, sram_total_bytes)`` for a die."""
    return die.compute_flops, die.sram_bytes


def max_d2d_bandwidth(die: DieSpec, dram: DramChipletSpec, chiplets: int) -> float:
    """Largest per-link D2D bandwidth the IO budget allows next to ``chiplets`` DRAM dies."""
    dram_demand = chiplets * dram.bandwidth
    if dram_demand > die.edge_io_bandwidth * die.dram_io_fraction + 1e-6:
        return 0.0
    return max(0.0, min(die.edge_io_bandwidth * (1.0 - die.dram_io_fraction),
                        die.edge_io_bandwidth - dram_demand))


def validate_config(cfg: WaferConfig) -> Verdict:
    """Check area, IO-budget and sanity constraints; never raises."""
    problems = []
    eps = 1e-9
    if cfg.grid_x <= 0 or cfg.grid_y <= 0:
        problems.append("grid: die counts must be positive")
    if not 0 <= cfg.dram_chiplets_per_die <= 2 * MAX_CHIPLETS_PER_SIDE:
        problems.append("dram count: chiplets per die outside [0, 12]")
    if cfg.d2d_bandwidth < 0 or cfg.d2d_latency < 0:
        problems.append("interconnect: negative bandwidth or latency")

    width = cfg.grid_x * cfg.slot_width_mm()
    if width > cfg.wafer_width_mm + eps:
        problems.append(
            f"area (horizontal): {cfg.grid_x} x {cfg.slot_width_mm():.2f} mm = {width:.2f} mm "
            f"> {cfg.wafer_width_mm:.2f} mm")
    height = cfg.grid_y * cfg.slot_height_mm()
    if height > cfg.wafer_height_mm + eps:
        problems.append(
            f"area (vertical): {cfg.grid_y} x {cfg.slot_height_mm():.2f} mm = {height:.2f} mm "
            f"> {cfg.wafer_height_mm:.2f} mm")
    if cfg.chiplet_columns() > 2 * MAX_CHIPLETS_PER_SIDE:
        problems.append("dram placement: more chiplet columns than die edges allow")

    io = cfg.die.edge_io_bandwidth
    dram_bw = cfg.dram_bandwidth_per_die
    frac = cfg.die.dram_io_fraction
    if dram_bw > frac * io * (1 + eps):
        problems.append(
            f"IO budget (DRAM): {dram_bw:.3e} B/s exceeds DRAM share {frac * io:.3e} B/s")
    if cfg.d2d_bandwidth > (1.0 - frac) * io * (1 + eps):
        problems.append(
            f"IO budget (D2D): {cfg.d2d_bandwidth:.3e} B/s exceeds D2D share {(1 - frac) * io:.3e} B/s")
    if cfg.d2d_bandwidth + dram_bw > io * (1 + eps):
        problems.append(
            f"IO budget (total): D2D + DRAM = {cfg.d2d_bandwidth + dram_bw:.3e} B/s "
            f"> edge IO {io:.3e} B/s")
    return Verdict(not problems, tuple(problems))


@dataclass(frozen=True)
class TemplateRanges:
    """Candidate lists for every enumerated field (Cartesian product)."""

    grid_x: Sequence[int]
    grid_y: Sequence[int]
    die: Sequence[DieSpec]
    dram: Sequence[DramChipletSpec]
    dram_chiplets_per_die: Sequence[int]
    d2d_bandwidth: Sequence[float]
    d2d_latency: Sequence[float] = (1e-7,)

    def fields(self) -> list[Sequence]:
        return [self.grid_x, self.grid_y, self.die, self.dram,
                self.dram_chiplets_per_die, self.d2d_bandwidth, self.d2d_latency]


def enumerate_wafer_configs(ranges: TemplateRanges,
                            wafer_dims: tuple[float, float] = (DEFAULT_WAFER_MM, DEFAULT_WAFER_MM),
                            ) -> list[WaferConfig]:
    """All area/IO-feasible configurations, lexicographic over range indices."""
    if wafer_dims[0] <= 0 or wafer_dims[1] <= 0:
        raise ValueError("wafer dimensions must be positive")
    lists = ranges.fields()
    if any(len(values) == 0 for values in lists):
        return []
    out = []
    for gx, gy, die, dram, count, d2d, alpha in itertools.product(*lists):
        cfg = WaferConfig(grid_x=gx, grid_y=gy, die=die, dram_chiplets_per_die=count,
                          dram=dram, d2d_bandwidth=d2d, d2d_latency=alpha,
                          wafer_width_mm=wafer_dims[0], wafer_height_mm=wafer_dims[1])
        if validate_config(cfg):
            out.append(replace(cfg, name=config_label(cfg)))
    return out


def config_label(cfg: WaferConfig) -> str:
    gb = cfg.dram_capacity_per_die / 1e9
    return (f"{cfg.grid_x}x{cfg.grid_y}-{cfg.die.name or 'die'}-"
            f"{cfg.dram_chiplets_per_die}x{cfg.dram.name or 'dram'}-{gb:g}GB-"
            f"d2d{cfg.d2d_bandwidth / 1e12:g}T")


def named(configs: Iterable[WaferConfig]) -> dict[str, WaferConfig]:
    return {c.name: c for c in configs}
