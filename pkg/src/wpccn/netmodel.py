"""Physical system: parameters, channel gains, topology and channel sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def _as_vector(value, size: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Constants of one WPCCN: N sources, K relays and one AP.

    ``zeta_src``/``zeta_rel`` and ``demands`` accept scalars, broadcast to
    per-node arrays.
    """

    num_sources: int
    num_relays: int
    bandwidth_w: float = 1e6
    noise_psd_n0: float = dbm_to_watt(-90.0)
    ap_power_pa: float = 4.0
    max_ul_power: float = 10e-3
    zeta_src: np.ndarray = 0.5
    zeta_rel: np.ndarray = 0.5
    demands: np.ndarray = 50.0

    def __post_init__(self):
        if self.num_sources < 1:
            raise ValueError("need at least one source")
        if self.num_relays < 0:
            raise ValueError("num_relays must be >= 0")
        object.__setattr__(self, "zeta_src", _as_vector(self.zeta_src, self.num_sources, "zeta_src"))
        object.__setattr__(self, "zeta_rel", _as_vector(self.zeta_rel, self.num_relays, "zeta_rel"))
        object.__setattr__(self, "demands", _as_vector(self.demands, self.num_sources, "demands"))
        for name in ("bandwidth_w", "noise_psd_n0", "ap_power_pa", "max_ul_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("zeta_src", "zeta_rel"):
            z = getattr(self, name)
            if np.any(z <= 0) or np.any(z > 1):
                raise ValueError(f"{name} must lie in (0, 1]")
        if np.any(self.demands < 0):
            raise ValueError("demands must be non-negative")

    @property
    def noise_power(self) -> float:
        """In-band noise power W*N0 in watts."""
        return self.bandwidth_w * self.noise_psd_n0

    def replace(self, **changes) -> "SystemParams":
        fields = dict(
            num_sources=self.num_sources,
            num_relays=self.num_relays,
            bandwidth_w=self.bandwidth_w,
            noise_psd_n0=self.noise_psd_n0,
            ap_power_pa=self.ap_power_pa,
            max_ul_power=self.max_ul_power,
            zeta_src=self.zeta_src,
            zeta_rel=self.zeta_rel,
            demands=self.demands,
        )
        fields.update(changes)
        return SystemParams(**fields)

    def to_dict(self) -> dict:
        return {
            "num_sources": self.num_sources,
            "num_relays": self.num_relays,
            "bandwidth_w": self.bandwidth_w,
            "noise_psd_n0": self.noise_psd_n0,
            "ap_power_pa": self.ap_power_pa,
            "max_ul_power": self.max_ul_power,
            "zeta_src": self.zeta_src.tolist(),
            "zeta_rel": self.zeta_rel.tolist(),
            "demands": self.demands.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Linear power gains of every DL (h) and UL (g) link."""

    h_ap_src: np.ndarray
    h_ap_rel: np.ndarray
    g_src_ap: np.ndarray
    g_src_rel: np.ndarray
    g_rel_ap: np.ndarray

    def __post_init__(self):
        for name in ("h_ap_src", "h_ap_rel", "g_src_ap", "g_src_rel", "g_rel_ap"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size and not np.all(arr > 0):
                raise ValueError(f"{name}: channel gains must be positive")
            object.__setattr__(self, name, arr)
        n = self.h_ap_src.shape[0]
        k = self.h_ap_rel.shape[0]
        if self.g_src_ap.shape != (n,) or self.g_rel_ap.shape != (k,):
            raise ValueError("inconsistent channel vector lengths")
        if self.g_src_rel.size == 0:
            object.__setattr__(self, "g_src_rel", self.g_src_rel.reshape(n, k))
        if self.g_src_rel.shape != (n, k):
            raise ValueError(f"g_src_rel must be ({n}, {k}), got {self.g_src_rel.shape}")

    @property
    def num_sources(self) -> int:
        return self.h_ap_src.shape[0]

    @property
    def num_relays(self) -> int:
        return self.h_ap_rel.shape[0]

    def scaled(self, c: float) -> "ChannelSet":
        return ChannelSet(
            self.h_ap_src * c, self.h_ap_rel * c, self.g_src_ap * c, self.g_src_rel * c, self.g_rel_ap * c
        )

    def to_dict(self) -> dict:
        return {
            "h_ap_src": self.h_ap_src.tolist(),
            "h_ap_rel": self.h_ap_rel.tolist(),
            "g_src_ap": self.g_src_ap.tolist(),
            "g_src_rel": self.g_src_rel.tolist(),
            "g_rel_ap": self.g_rel_ap.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSet":
        return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


@dataclass(frozen=True, eq=False)
class Positions:
    """Node coordinates in meters; the AP sits at ``ap``."""

    sources: np.ndarray
    relays: np.ndarray
    ap: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "sources", np.asarray(self.sources, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "relays", np.asarray(self.relays, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "ap", np.asarray(self.ap, dtype=float).reshape(2))

    def to_dict(self) -> dict:
        return {"sources": self.sources.tolist(), "relays": self.relays.tolist(), "ap": self.ap.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Positions":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    params: SystemParams
    channels: ChannelSet
    positions: Positions | None = None

    def __post_init__(self):
        if self.channels.num_sources != self.params.num_sources:
            raise ValueError("channel set and params disagree on N")
        if self.channels.num_relays != self.params.num_relays:
            raise ValueError("channel set and params disagree on K")

    @property
    def n(self) -> int:
        return self.params.num_sources

    @property
    def k(self) -> int:
        return self.params.num_relays

    def with_params(self, **changes) -> "NetworkInstance":
        return NetworkInstance(self.params.replace(**changes), self.channels, self.positions)

    def to_dict(self) -> dict:
        d = {"params": self.params.to_dict(), "channels": self.channels.to_dict()}
        if self.positions is not None:
            d["positions"] = self.positions.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkInstance":
        pos = d.get("positions")
        return cls(
            SystemParams.from_dict(d["params"]),
            ChannelSet.from_dict(d["channels"]),
            Positions.from_dict(pos) if pos is not None else None,
        )

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text: str) -> "NetworkInstance":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "NetworkInstance":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class GeometryConfig:
    """Sources uniform in a quadrant annulus, relays on an arc at ``relay_radius_m``.

    ``angle_min``/``angle_max`` default to the first quadrant; setting both to
    the same value collapses the geometry onto a ray.
    """

    r_min_m: float = 3.0
    r_max_m: float = 4.0
    relay_radius_m: float = 2.0
    angle_min: float = 0.0
    angle_max: float = math.pi / 2

    def __post_init__(self):
        if not 0 < self.r_min_m <= self.r_max_m:
            raise ValueError("need 0 < r_min <= r_max")
        if not self.relay_radius_m > 0:
            raise ValueError("relay radius must be positive")
        if self.angle_max < self.angle_min:
            raise ValueError("angle_max < angle_min")


@dataclass(frozen=True)
class ChannelModelConfig:
    """Log-distance path loss with log-normal shadowing and optional Rayleigh fading.

    ``shadowing_sigma_db`` is the standard deviation of the shadowing term in dB.
    """

    pl_d0_db: float = 31.67
    shadowing_sigma_db: float = math.sqrt(2.0)
    pathloss_exponent: float = 2.0
    fading: str = "rayleigh"
    rng_seed: int | None = None

    def __post_init__(self):
        if self.pathloss_exponent < 0:
            raise ValueError("path-loss exponent must be >= 0")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError(f"unknown fading model {self.fading!r}")


def generate_topology(
    params: SystemParams, geometry: GeometryConfig, rng: np.random.Generator
) -> Positions:
    """Draw source positions uniformly (by area) in the annular sector.

    Relays are placed deterministically on the relay arc, evenly spaced in
    angle at the centers of K equal sub-sectors.
    """
    n, k = params.num_sources, params.num_relays
    # uniform by area: r^2 uniform between the radii
    u = rng.uniform(geometry.r_min_m**2, geometry.r_max_m**2, size=n)
    r = np.sqrt(u)
    theta = rng.uniform(geometry.angle_min, geometry.angle_max, size=n)
    sources = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    span = geometry.angle_max - geometry.angle_min
    rel_theta = geometry.angle_min + span * (np.arange(k) + 0.5) / max(k, 1)
    relays = geometry.relay_radius_m * np.column_stack([np.cos(rel_theta), np.sin(rel_theta)])
    return Positions(sources, relays.reshape(k, 2))


def mean_gain(distance, cfg: ChannelModelConfig) -> np.ndarray:
    """Deterministic linear gain of the log-distance model (no shadowing, no fading)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("zero link distance: co-located nodes")
    gain_db = -(cfg.pl_d0_db + 10.0 * cfg.pathloss_exponent * np.log10(d))
    return 10.0 ** (gain_db / 10.0)


def _draw_gain(distance, cfg: ChannelModelConfig, rng: np.random.Generator) -> np.ndarray:
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("zero link distance: co-located nodes")
    gain_db = -(cfg.pl_d0_db + 10.0 * cfg.pathloss_exponent * np.log10(d))
    if cfg.shadowing_sigma_db > 0:
        gain_db = gain_db + rng.normal(0.0, cfg.shadowing_sigma_db, size=d.shape)
    omega = 10.0 ** (gain_db / 10.0)
    if cfg.fading == "rayleigh":
        # Rayleigh amplitude -> exponential power with mean omega
        return rng.exponential(1.0, size=d.shape) * omega
    return omega


def link_distances(pos: Positions) -> dict[str, np.ndarray]:
    src, rel, ap = pos.sources, pos.relays, pos.ap
    return {
        "ap_src": np.linalg.norm(src - ap, axis=1),
        "ap_rel": np.linalg.norm(rel - ap, axis=1),
        "src_rel": np.linalg.norm(src[:, None, :] - rel[None, :, :], axis=2).reshape(len(src), len(rel)),
    }


def sample_channels(pos: Positions, cfg: ChannelModelConfig, rng: np.random.Generator) -> ChannelSet:
    """Independent DL and UL draws for every link of the topology."""
    d = link_distances(pos)
    return ChannelSet(
        h_ap_src=_draw_gain(d["ap_src"], cfg, rng),
        h_ap_rel=_draw_gain(d["ap_rel"], cfg, rng),
        g_src_ap=_draw_gain(d["ap_src"], cfg, rng),
        g_src_rel=_draw_gain(d["src_rel"], cfg, rng),
        g_rel_ap=_draw_gain(d["ap_rel"], cfg, rng),
    )


def deterministic_channels(pos: Positions, cfg: ChannelModelConfig) -> ChannelSet:
    """Distance-only gains, identical in DL and UL."""
    d = link_distances(pos)
    return ChannelSet(
        h_ap_src=mean_gain(d["ap_src"], cfg),
        h_ap_rel=mean_gain(d["ap_rel"], cfg),
        g_src_ap=mean_gain(d["ap_src"], cfg),
        g_src_rel=mean_gain(d["src_rel"], cfg),
        g_rel_ap=mean_gain(d["ap_rel"], cfg),
    )


def random_instance(
    params: SystemParams,
    rng: np.random.Generator,
    geometry: GeometryConfig | None = None,
    channel: ChannelModelConfig | None = None,
) -> NetworkInstance:
    geometry = geometry or GeometryConfig()
    channel = channel or ChannelModelConfig()
    pos = generate_topology(params, geometry, rng)
    return NetworkInstance(params, sample_channels(pos, channel, rng), pos)


SCENARIO_KEYS = {
    "n", "k", "r_min_m", "r_max_m", "relay_radius_m", "pl_d0_db", "sigma_z_db", "exponent", "fading", "seed",
}


def scenario_from_dict(d: dict) -> tuple[SystemParams, GeometryConfig, ChannelModelConfig, int]:
    """Split a flat scenario document into model configs plus its seed.

    Keys not in :data:`SCENARIO_KEYS` are passed to :class:`SystemParams`
    (for example ``max_ul_power`` or ``demands``); ``sigma_z_db`` is the
    shadowing standard deviation in dB.
    """
    d = dict(d)
    geo_defaults = GeometryConfig()
    ch_defaults = ChannelModelConfig()
    geometry = GeometryConfig(
        r_min_m=float(d.pop("r_min_m", geo_defaults.r_min_m)),
        r_max_m=float(d.pop("r_max_m", geo_defaults.r_max_m)),
        relay_radius_m=float(d.pop("relay_radius_m", geo_defaults.relay_radius_m)),
    )
    channel = ChannelModelConfig(
        pl_d0_db=float(d.pop("pl_d0_db", ch_defaults.pl_d0_db)),
        shadowing_sigma_db=float(d.pop("sigma_z_db", ch_defaults.shadowing_sigma_db)),
        pathloss_exponent=float(d.pop("exponent", ch_defaults.pathloss_exponent)),
        fading=d.pop("fading", ch_defaults.fading),
    )
    seed = int(d.pop("seed", 0))
    if "n" not in d or "k" not in d:
        raise ValueError("scenario needs 'n' and 'k'")
    params = SystemParams(num_sources=int(d.pop("n")), num_relays=int(d.pop("k")), **d)
    return params, geometry, channel, seed


def scenario_instance(d: dict) -> NetworkInstance:
    """Draw the network a scenario document describes, seeded by its ``seed``."""
    params, geometry, channel, seed = scenario_from_dict(d)
    return random_instance(params, np.random.default_rng(seed), geometry, channel)


def load_instance(path: str | Path, seed: int | None = None) -> NetworkInstance:
    """Read either a serialized instance or a flat scenario document.

    ``seed`` replaces a scenario's own seed; a serialized instance ignores it.
    """
    d = json.loads(Path(path).read_text())
    if "channels" in d:
        return NetworkInstance.from_dict(d)
    if seed is not None:
        d["seed"] = seed
    return scenario_instance(d)


def harvested_energy(zeta, tau0, pa, h_dl):
    """Energy collected during the EH slot: ``zeta * tau0 * pa * h``."""
    return zeta * tau0 * pa * h_dl


def link_rate(p_tx, g_ul, w, n0):
    """Shannon rate in bits/s of an AWGN link."""
    return w * np.log2(1.0 + p_tx * g_ul / (w * n0))
