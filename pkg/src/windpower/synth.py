"""Synthetic SCADA data driven by the cubic wind power law.

Wind speed is a stationary Gaussian AR(1) process pushed through the
probability integral transform onto a Weibull marginal. Turbines of a farm
share one latent process and mix in an independent one with weight
``spatial_decorrelation``, so local winds scatter around the farm mean
while every turbine keeps the configured Weibull marginal.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm

from .pipeline import RawRecord, TurbineState

BETZ_LIMIT = 16.0 / 27.0
STANDBY_POWER_KW = -5.0

_SHARED_STREAM = 0
_DIRECTION_STREAM = 1_000_003
_TEMPERATURE_STREAM = 1_000_033
_ANEMOMETER_STREAM = 1_000_037


@dataclass(frozen=True)
class TurbinePhysics:
    rho: float = 1.225
    rotor_diameter: float = 90.0
    cp: float = 0.45
    rated_power: float = 2050.0
    cut_in: float = 3.5
    cut_out: float = 25.0

    def __post_init__(self):
        if not 0 < self.cp <= BETZ_LIMIT:
            raise ValueError(f"cp must lie in (0, 16/27], got {self.cp}")
        if not self.cut_in < self.cut_out:
            raise ValueError("cut_in must be below cut_out")
        if self.rated_power <= 0:
            raise ValueError("rated_power must be positive")

    @property
    def rotor_area(self) -> float:
        return math.pi * (self.rotor_diameter / 2.0) ** 2


@dataclass(frozen=True)
class WindProcess:
    weibull_shape: float = 2.0
    weibull_scale: float = 8.5
    phi: float = 0.97
    direction_drift: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.weibull_shape <= 0 or self.weibull_scale <= 0:
            raise ValueError("Weibull shape and scale must be positive")
        if not 0 <= self.phi < 1:
            raise ValueError("phi must lie in [0, 1)")


@dataclass(frozen=True)
class NoiseModel:
    power_mult_sigma: float = 0.08
    power_add_sigma: float = 20.0
    anemometer_sigma: float = 0.3
    temperature_sigma: float = 0.5


@dataclass(frozen=True)
class SiteEffects:
    """Deviations of the rotor-effective wind from the nacelle anemometer.

    ``direction_speedup`` is the amplitude of a terrain speed-up factor
    ``1 + a cos(theta - phase_i)`` with a per-turbine phase, and with
    ``density_from_temperature`` the air density scales as
    ``rho * 288.15 / (T + 273.15)``.
    """

    direction_speedup: float = 0.06
    density_from_temperature: bool = True


def theoretical_power(physics: TurbinePhysics, w, clip: bool = True):
    """``0.5 rho S cp w**3`` in kW, zero outside ``[cut_in, cut_out)``.

    With ``clip`` the output is capped at the rated power.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("wind speed must be non-negative")
    p = 0.5 * physics.rho * physics.rotor_area * physics.cp * w**3 / 1000.0
    if clip:
        p = np.minimum(p, physics.rated_power)
    p = np.where((w >= physics.cut_in) & (w < physics.cut_out), p, 0.0)
    return float(p) if p.ndim == 0 else p


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def _latent_ar1(rng: np.random.Generator, phi: float, n: int) -> np.ndarray:
    """Stationary AR(1) with unit marginal variance."""
    e = rng.standard_normal(n)
    e[1:] *= math.sqrt(1.0 - phi * phi)
    return lfilter([1.0], [1.0, -phi], e)


def weibull_from_gaussian(z, shape: float, scale: float) -> np.ndarray:
    """Map N(0, 1) values onto a Weibull marginal through the probability transform."""
    return scale * (-norm.logsf(z)) ** (1.0 / shape)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to regenerate a synthetic farm."""

    physics: TurbinePhysics = field(default_factory=TurbinePhysics)
    wind: WindProcess = field(default_factory=WindProcess)
    noise: NoiseModel = field(default_factory=NoiseModel)
    site: SiteEffects = field(default_factory=SiteEffects)
    n_turbines: int = 6
    spatial_decorrelation: float = 0.3
    n_steps: int = 70_000
    start: str = "2012-01-01T00:00:00Z"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        physics = TurbinePhysics(**d.pop("physics", {}))
        wind = WindProcess(**d.pop("wind", {}))
        noise = NoiseModel(**d.pop("noise", {}))
        site = SiteEffects(**d.pop("site", {}))
        return cls(physics, wind, noise, site, **d)

    def simulate(self) -> list[list[RawRecord]]:
        return simulate_farm([self.physics] * self.n_turbines, self.wind, self.n_turbines,
                             self.spatial_decorrelation, self.n_steps, self.noise, self.start, site=self.site)


def _start_time(start) -> datetime:
    if isinstance(start, datetime):
        ts = start
    else:
        text = str(start)
        ts = datetime.fromisoformat(text[:-1] + "+00:00" if text.endswith("Z") else text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def simulate_farm(
    physics,
    wind: WindProcess,
    n_turbines: int,
    spatial_decorrelation: float,
    n_steps: int,
    noise: NoiseModel | None = None,
    start="2012-01-01T00:00:00Z",
    wind_series=None,
    site: SiteEffects | None = None,
) -> list[list[RawRecord]]:
    """10-minute records for each turbine of a farm.

    Turbine ``i`` sees the latent wind ``sqrt(1 - s**2) z_shared + s z_i`` with
    ``s = spatial_decorrelation``; anemometer error is mixed the same way and
    directions and temperatures get local deviations scaled by ``s``, so
    ``s = 0`` gives identical sensor readings across turbines. A one-turbine farm always sees the shared wind.
    Power noise is independent per turbine in every case.

    ``wind_series`` replaces the simulated shared wind speed by a given series
    of length ``n_steps``; local deviations are then mixed in latent space.
    """
    if n_turbines < 1:
        raise ValueError("need at least one turbine")
    if n_steps < 1:
        raise ValueError("need at least one step")
    if not 0 <= spatial_decorrelation <= 1:
        raise ValueError("spatial_decorrelation must lie in [0, 1]")
    if isinstance(physics, TurbinePhysics):
        physics = [physics] * n_turbines
    if len(physics) != n_turbines:
        raise ValueError("one TurbinePhysics per turbine expected")
    noise = noise or NoiseModel()
    site = SiteEffects(0.0, False) if site is None else site
    s = spatial_decorrelation if n_turbines > 1 else 0.0
    seed = wind.seed
    t0 = _start_time(start)

    z_shared = _latent_ar1(_stream(seed, _SHARED_STREAM), wind.phi, n_steps)
    drng = _stream(seed, _DIRECTION_STREAM)
    direction = np.cumsum(wind.direction_drift * drng.standard_normal(n_steps)) + 360.0 * drng.random()
    steps = np.arange(n_steps)
    trng = _stream(seed, _TEMPERATURE_STREAM)
    temperature = 10.0 + 8.0 * np.sin(2 * np.pi * (steps / 144.0 - 0.25)) + noise.temperature_sigma * trng.standard_normal(n_steps)
    e_shared = _stream(seed, _ANEMOMETER_STREAM).standard_normal(n_steps)
    stamps = [t0 + timedelta(minutes=10 * k) for k in range(n_steps)]

    farm = []
    for i in range(n_turbines):
        rng = _stream(seed, i + 1)
        z_local = _latent_ar1(rng, wind.phi, n_steps)
        z = math.sqrt(1.0 - s * s) * z_shared + s * z_local
        if wind_series is None:
            w_true = weibull_from_gaussian(z, wind.weibull_shape, wind.weibull_scale)
        else:
            w_true = _replay_wind(np.asarray(wind_series, dtype=float), z_local, s, wind)
        phys = physics[i]
        e = math.sqrt(1.0 - s * s) * e_shared + s * rng.standard_normal(n_steps)
        measured = np.maximum(w_true + noise.anemometer_sigma * e, 0.0)
        local_dir = np.cumsum(rng.standard_normal(n_steps)) * 0.5 + 15.0 * rng.standard_normal()
        dirs = np.mod(direction + s * local_dir, 360.0)
        dirs[dirs >= 360.0] = 0.0
        temps = temperature + s * rng.standard_normal(n_steps)
        phase = 360.0 * rng.random()
        w_rotor = w_true * (1.0 + site.direction_speedup * np.cos(np.deg2rad(dirs - phase)))
        power = theoretical_power(phys, np.maximum(w_rotor, 0.0))
        if site.density_from_temperature:
            power = np.minimum(power * 288.15 / (temps + 273.15), phys.rated_power)
        power = power * np.exp(noise.power_mult_sigma * rng.standard_normal(n_steps))
        power = np.clip(power + noise.power_add_sigma * rng.standard_normal(n_steps), 0.0, phys.rated_power)
        running = (w_true >= phys.cut_in) & (w_true < phys.cut_out)
        power = np.where(running, power, STANDBY_POWER_KW)
        tid = f"T{i + 1}"
        farm.append([
            RawRecord(stamps[k], tid, float(measured[k]), float(dirs[k]), float(temps[k]), float(power[k]),
                      TurbineState.FULL_OPERATION if running[k] else TurbineState.STOP)
            for k in range(n_steps)
        ])
    return farm


def _replay_wind(series, z_local, s, wind):
    if s == 0.0:
        return series.copy()
    # invert the Weibull transform, mix in latent space, map back
    z = norm.isf(np.exp(-(series / wind.weibull_scale) ** wind.weibull_shape))
    return weibull_from_gaussian(math.sqrt(1.0 - s * s) * z + s * z_local, wind.weibull_shape, wind.weibull_scale)


def simulate_turbine(physics: TurbinePhysics, wind: WindProcess, n_steps: int, noise: NoiseModel | None = None,
                     start="2012-01-01T00:00:00Z", wind_series=None, site: SiteEffects | None = None) -> list[RawRecord]:
    return simulate_farm([physics], wind, 1, 0.0, n_steps, noise, start, wind_series, site)[0]


def power_curve_knots(physics: TurbinePhysics, step: float = 0.5, max_speed: float | None = None):
    """Tabulate the clipped theoretical curve as ``(speeds, powers)`` knots."""
    top = physics.cut_out if max_speed is None else max_speed
    speeds = np.arange(0.0, top + 1e-9, step)
    return speeds, theoretical_power(physics, speeds)
