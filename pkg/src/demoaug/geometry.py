"""Shape primitives shared by the simulator and the rasterizer."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box:
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class Cylinder:
    radius: float
    half_length: float


@dataclass(frozen=True)
class Valve:
    """Axis-fixed rotary fixture: a hub with `blades` radial arms."""

    blades: int
    blade_length: float
    hub_radius: float
    height: float


@dataclass(frozen=True)
class Bowl:
    radius: float
    height: float


@dataclass(frozen=True)
class Plate:
    radius: float
    height: float


@dataclass(frozen=True)
class Particle:
    half_size: float


Geometry = Box | Cylinder | Valve | Bowl | Plate | Particle


def rest_half_height(geom: Geometry) -> float:
    """Height of the shape's center above whatever it rests on (upright)."""
    if isinstance(geom, Box):
        return geom.half_extents[2]
    if isinstance(geom, Cylinder):
        return geom.half_length
    if isinstance(geom, Valve):
        return geom.height
    if isinstance(geom, (Bowl, Plate)):
        return geom.height / 2.0
    if isinstance(geom, Particle):
        return geom.half_size
    raise TypeError(f"unknown geometry {geom!r}")


def valve_blade_azimuths(geom: Valve, base_yaw: float, valve_angle: float) -> list[float]:
    return [base_yaw + valve_angle + k * 2.0 * math.pi / geom.blades for k in range(geom.blades)]
