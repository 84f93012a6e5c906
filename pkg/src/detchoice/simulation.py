"""Synthetic data generators.

Two data-generating processes:

* A spatial process: items are uniform points in a square, labels are thinned
  first independently by distance to the origin and then by Matérn Type III
  hard-core thinning with exclusion radius 2r. The radius r controls the
  negative dependence between selections.
* A radio-transmission process: each observation is a set of transmissions
  with random channel, spreading factor, power, and delay; labels come from a
  first-lock capture rule and features encode concurrency and relative delay.

Every generator is deterministic under a fixed RngState and its observation
streams are split per (radius, split, index) so datasets are reproducible in
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Observation
from .exceptions import DataError
from .kernel import Assortment
from .rng import RngState, as_generator

# ---------------------------------------------------------------------------
# Spatial process
# ---------------------------------------------------------------------------

SPATIAL_FEATURES = ("const", "x", "y", "dist")


@dataclass(frozen=True)
class SpatialConfig:
    """Spatial generator settings.

    Labels start at 1, flip to 0 independently with probability
    1 - min(1, exp(gamma0 + gamma1 * d_i)) where d_i is the distance to the
    origin, and then Matérn Type III thinning with radius ``radius`` runs on
    the survivors. ``include_constant`` prepends an all-ones feature column so
    fitted models carry an intercept.
    """

    n_items: int = 15
    square_half_width: float = 2.0
    gamma0: float = -5.0
    gamma1: float = 2.5
    radius: float = 0.5
    include_constant: bool = True

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be at least 1")
        if self.square_half_width <= 0:
            raise ValueError("square_half_width must be positive")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return SPATIAL_FEATURES if self.include_constant else SPATIAL_FEATURES[1:]

    @property
    def similarity_mask(self) -> tuple[int, ...]:
        # similarity sees the point coordinates only
        off = 1 if self.include_constant else 0
        return (off, off + 1)

    @property
    def standardize_features(self) -> tuple[int, ...]:
        off = 1 if self.include_constant else 0
        return (off, off + 1, off + 2)


def matern_iii_thin(points: np.ndarray, survivors: np.ndarray, radius: float) -> np.ndarray:
    """Matérn Type III hard-core thinning of the surviving points.

    Survivors are visited in decreasing y order (ties broken by x then index);
    each point that still survives keeps its label and zeroes every other
    surviving point strictly within Euclidean distance 2 * radius. The result
    is deterministic and, restricted to survivors, a maximal 2r-separated set
    in that visiting order.
    """
    points = np.asarray(points, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    out = np.asarray(survivors, dtype=bool).copy()
    order = sorted(range(len(points)), key=lambda i: (-points[i, 1], points[i, 0], i))
    cutoff = 2.0 * radius
    for i in order:
        if not out[i]:
            continue
        dists = np.sqrt(np.sum((points - points[i]) ** 2, axis=1))
        close = (dists < cutoff) & out
        close[i] = False
        out[close] = False
    return out


def gen_spatial_observation(cfg: SpatialConfig, rng, obs_id: str = "obs-0") -> Observation:
    """One assortment-selection pair from the spatial process."""
    gen = as_generator(rng)
    w = cfg.square_half_width
    points = gen.uniform(-w, w, size=(cfg.n_items, 2))
    dist = np.sqrt(np.sum(points**2, axis=1))
    keep_prob = np.minimum(1.0, np.exp(cfg.gamma0 + cfg.gamma1 * dist))
    labels = gen.random(cfg.n_items) < keep_prob
    labels = matern_iii_thin(points, labels, cfg.radius)
    cols = [points[:, 0], points[:, 1], dist]
    if cfg.include_constant:
        cols.insert(0, np.ones(cfg.n_items))
    features = np.column_stack(cols)
    chosen = tuple(int(i) for i in np.nonzero(labels)[0])
    return Observation(id=obs_id, assortment=Assortment(features), chosen=chosen)


def gen_spatial_dataset(cfg: SpatialConfig, n_obs: int, rng: RngState, id_prefix: str = "obs") -> Dataset:
    """Independent observations, one split substream per index."""
    if not isinstance(rng, RngState):
        rng = RngState(int(rng))
    observations = [
        gen_spatial_observation(cfg, rng.split(i).generator(), obs_id=f"{id_prefix}-{i}")
        for i in range(n_obs)
    ]
    return Dataset(
        observations=observations,
        feature_names=cfg.feature_names,
        similarity_mask=cfg.similarity_mask,
        quality_mask=None,
        standardize_features=cfg.standardize_features,
    )


_SPLIT_TRAIN, _SPLIT_EVAL = 0, 1


def radius_sweep(
    radii,
    n_train: int,
    n_eval: int,
    cfg: SpatialConfig,
    rng: RngState,
) -> list[tuple[float, Dataset, Dataset]]:
    """Independent train/eval dataset pairs for each radius.

    Streams are derived per (radius index, split, observation index) from the
    master state, so any (radius, split) regenerates identically in isolation.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("radii must be nonempty")
    if not isinstance(rng, RngState):
        rng = RngState(int(rng))
    out = []
    for r_idx, r in enumerate(radii):
        rcfg = SpatialConfig(
            n_items=cfg.n_items,
            square_half_width=cfg.square_half_width,
            gamma0=cfg.gamma0,
            gamma1=cfg.gamma1,
            radius=r,
            include_constant=cfg.include_constant,
        )
        train = gen_spatial_dataset(rcfg, n_train, rng.split(r_idx, _SPLIT_TRAIN), id_prefix=f"r{r_idx}-train")
        evald = gen_spatial_dataset(rcfg, n_eval, rng.split(r_idx, _SPLIT_EVAL), id_prefix=f"r{r_idx}-eval")
        out.append((r, train, evald))
    return out


# ---------------------------------------------------------------------------
# Radio-transmission process
# ---------------------------------------------------------------------------

CHANNELS = tuple(range(9, 17))
SPREADING_FACTORS = (8, 9, 10, 11)
DEFAULT_AIRTIME_MS = {8: 113.0, 9: 206.0, 10: 371.0, 11: 741.0}

CAPTURE_RULES = ("first_lock",)


@dataclass(frozen=True)
class Transmission:
    device: int
    channel: int
    sf: int
    power: int  # dBm
    delay: float  # ms
    airtime: float  # ms

    def __post_init__(self):
        if self.airtime <= 0:
            raise ValueError("airtime must be positive")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        if self.channel not in CHANNELS:
            raise DataError(f"channel {self.channel} outside {CHANNELS}")
        if self.sf not in SPREADING_FACTORS:
            raise DataError(f"spreading factor {self.sf} outside {SPREADING_FACTORS}")

    @property
    def end(self) -> float:
        return self.delay + self.airtime

    def overlaps(self, other: "Transmission") -> bool:
        # concurrency means closed-interval overlap of [delay, delay + airtime]
        return self.delay <= other.end and other.delay <= self.end


@dataclass(frozen=True)
class LoraGenConfig:
    """Transmission generator settings.

    ``relative_delay_offset`` is the large constant added to an item's own
    nonzero relative-delay coordinate so packets on different spreading
    factors come out dissimilar under any plausible lengthscale.
    """

    n_devices: int = 9
    d_max: float = 600.0
    channel_subset: tuple[int, ...] = CHANNELS
    sf_subset: tuple[int, ...] = SPREADING_FACTORS
    airtime_table: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_AIRTIME_MS))
    relative_delay_offset: float = 100.0
    power_range: tuple[int, int] = (-4, 23)

    def __post_init__(self):
        if self.n_devices < 1:
            raise ValueError("n_devices must be at least 1")
        if self.d_max < 0:
            raise ValueError("d_max must be nonnegative")
        if not self.channel_subset or not set(self.channel_subset) <= set(CHANNELS):
            raise ValueError(f"channel_subset must be a nonempty subset of {CHANNELS}")
        if not self.sf_subset or not set(self.sf_subset) <= set(SPREADING_FACTORS):
            raise ValueError(f"sf_subset must be a nonempty subset of {SPREADING_FACTORS}")
        missing = set(self.sf_subset) - set(self.airtime_table)
        if missing:
            raise ValueError(f"airtime_table missing spreading factors {sorted(missing)}")
        if self.relative_delay_offset <= 0:
            raise ValueError("relative_delay_offset must be positive")


def gen_lora_assortment(cfg: LoraGenConfig, rng) -> list[Transmission]:
    """One observation's transmissions: one per active device.

    Delay is a uniform integer on [0, d_max], power a uniform integer on the
    configured dBm range, channel and spreading factor uniform over their
    subsets, airtime looked up from the table by spreading factor.
    """
    gen = as_generator(rng)
    out = []
    channels = np.asarray(cfg.channel_subset)
    sfs = np.asarray(cfg.sf_subset)
    for device in range(cfg.n_devices):
        channel = int(channels[gen.integers(len(channels))])
        sf = int(sfs[gen.integers(len(sfs))])
        power = int(gen.integers(cfg.power_range[0], cfg.power_range[1] + 1))
        delay = float(gen.integers(int(round(cfg.d_max)) + 1))
        out.append(
            Transmission(
                device=device,
                channel=channel,
                sf=sf,
                power=power,
                delay=delay,
                airtime=float(cfg.airtime_table[sf]),
            )
        )
    return out


LORA_QUALITY_FEATURES = ("const", "ch_overlap", "ch_sf_overlap", "power", "delay")


def lora_feature_names(cfg: LoraGenConfig) -> tuple[str, ...]:
    sim = tuple(f"ch_{c}" for c in CHANNELS) + tuple(f"rdelay_sf{s}" for s in SPREADING_FACTORS)
    return LORA_QUALITY_FEATURES + sim


def lora_features(assortment: list[Transmission], cfg: LoraGenConfig) -> tuple[np.ndarray, np.ndarray]:
    """(quality features, similarity features) for one set of transmissions.

    Quality columns: constant, same-channel-concurrent dummy, same-channel-
    same-SF-concurrent dummy, raw power, raw delay (the continuous columns are
    standardized at fit time, not here). Similarity columns: one-hot channel
    block plus a relative-delay block with one coordinate per spreading
    factor; an item's own coordinate is delay / airtime + offset, others 0.
    """
    if not assortment:
        raise ValueError("assortment must be nonempty")
    n = len(assortment)
    ch_overlap = np.zeros(n)
    ch_sf_overlap = np.zeros(n)
    for i, t in enumerate(assortment):
        for j, u in enumerate(assortment):
            if i == j or t.channel != u.channel or not t.overlaps(u):
                continue
            ch_overlap[i] = 1.0
            if t.sf == u.sf:
                ch_sf_overlap[i] = 1.0
    X_q = np.column_stack(
        [
            np.ones(n),
            ch_overlap,
            ch_sf_overlap,
            np.array([t.power for t in assortment], dtype=float),
            np.array([t.delay for t in assortment], dtype=float),
        ]
    )

    ch_block = np.zeros((n, len(CHANNELS)))
    rd_block = np.zeros((n, len(SPREADING_FACTORS)))
    ch_index = {c: k for k, c in enumerate(CHANNELS)}
    sf_index = {s: k for k, s in enumerate(SPREADING_FACTORS)}
    for i, t in enumerate(assortment):
        ch_block[i, ch_index[t.channel]] = 1.0
        rd_block[i, sf_index[t.sf]] = t.delay / t.airtime + cfg.relative_delay_offset
    return X_q, np.column_stack([ch_block, rd_block])


def synthetic_capture_labels(assortment: list[Transmission], rule: str = "first_lock") -> tuple[int, ...]:
    """Ground-truth received-set labels for synthetic transmissions.

    ``first_lock``: within each (channel, spreading factor) group the receiver
    locks on to the earliest transmission; while locked, any time-overlapping
    transmission in the group is lost, and the first non-overlapping one is
    received and becomes the new lock. Order ties break toward higher power,
    then lower device id.
    """
    if rule not in CAPTURE_RULES:
        raise ValueError(f"unknown capture rule {rule!r}; expected one of {CAPTURE_RULES}")
    received: list[int] = []
    groups: dict[tuple[int, int], list[int]] = {}
    for idx, t in enumerate(assortment):
        groups.setdefault((t.channel, t.sf), []).append(idx)
    for members in groups.values():
        members.sort(key=lambda i: (assortment[i].delay, -assortment[i].power, assortment[i].device))
        locked = members[0]
        received.append(locked)
        for i in members[1:]:
            if assortment[i].overlaps(assortment[locked]):
                continue  # lost while the receiver is busy
            received.append(i)
            locked = i
    return tuple(sorted(received))


def gen_lora_dataset(
    cfg: LoraGenConfig,
    n_obs: int,
    rng: RngState,
    rule: str = "first_lock",
    id_prefix: str = "txset",
) -> Dataset:
    """Generate transmissions, derive features, label with the capture rule."""
    if not isinstance(rng, RngState):
        rng = RngState(int(rng))
    names = lora_feature_names(cfg)
    nq = len(LORA_QUALITY_FEATURES)
    observations = []
    for k in range(n_obs):
        assortment = gen_lora_assortment(cfg, rng.split(k).generator())
        X_q, X_s = lora_features(assortment, cfg)
        chosen = synthetic_capture_labels(assortment, rule=rule)
        features = np.column_stack([X_q, X_s])
        ids = tuple(f"dev{t.device}" for t in assortment)
        observations.append(
            Observation(id=f"{id_prefix}-{k}", assortment=Assortment(features, ids), chosen=chosen)
        )
    n_ch, n_sf = len(CHANNELS), len(SPREADING_FACTORS)
    return Dataset(
        observations=observations,
        feature_names=names,
        similarity_mask=tuple(range(nq, nq + n_ch + n_sf)),
        quality_mask=tuple(range(nq)),
        lengthscale_groups=(0,) * n_ch + (1,) * n_sf,
        standardize_features=(3, 4),  # power, delay
    )
