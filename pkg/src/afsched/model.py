"""Network instances: nodes, channel gains, system constants and the
seeded random generator used by the experiments."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError, Violation

INSTANCE_FORMAT = "afsched-instance/1"
SPLIT_RTOL = 1e-9


class Role(str, enum.Enum):
    SOURCE = "source"
    RELAY = "relay"
    DESTINATION = "destination"


class Placement(str, enum.Enum):
    PER_PAIR = "per_pair"
    PLANAR = "planar"


class DemandMode(str, enum.Enum):
    OFF = "off"
    AT_MOST = "at_most"
    AT_LEAST = "at_least"


@dataclass(frozen=True, order=True)
class NodeId:
    role: Role
    index: int

    @classmethod
    def source(cls, i):
        return cls(Role.SOURCE, int(i))

    @classmethod
    def relay(cls, r):
        return cls(Role.RELAY, int(r))

    @classmethod
    def destination(cls, j):
        return cls(Role.DESTINATION, int(j))

    def __str__(self):
        return f"{self.role.value}[{self.index}]"


def db_to_linear(x_db):
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def normalize_split(beta_db, beta1_db, beta2_db):
    """Rescale a (beta1, beta2) pair so their linear-scale sum equals beta.

    The ratio of the two linear thresholds is preserved. Pairs such as
    5/5 dB or 4/6 dB under a 10 dB target are written as splits of the dB
    value; decodability after combining needs the linear sum instead.
    """
    b1, b2 = db_to_linear(beta1_db), db_to_linear(beta2_db)
    scale = db_to_linear(beta_db) / (b1 + b2)
    return linear_to_db(b1 * scale), linear_to_db(b2 * scale)


_EVEN_SPLIT_DB = linear_to_db(db_to_linear(10.0) / 2)


@dataclass(frozen=True)
class SystemParams:
    """Scalar constants of the model. Powers are in mW.

    ``demand`` is either one integer for every source or a per-source tuple.
    ``g2`` is the dimensionless relay amplification applied to the useful
    signal; ``p_relay`` is the power an active relay radiates as
    interference toward other destinations.
    """

    beta_db: float = 10.0
    beta1_db: float = _EVEN_SPLIT_DB
    beta2_db: float = _EVEN_SPLIT_DB
    sigma2: float = 1e-6
    p_slot_max: float = 300.0
    p_slot_min: float = 3.0
    g2: float = 300.0
    p_relay: float = 300.0
    budget_fraction: float = 0.3
    T: int = 8
    demand: int | tuple[int, ...] = 8
    demand_mode: DemandMode = DemandMode.AT_MOST
    path_loss_a: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "demand_mode", DemandMode(self.demand_mode))
        if not isinstance(self.demand, (int, np.integer)):
            object.__setattr__(self, "demand", tuple(int(b) for b in self.demand))

    @classmethod
    def from_split(cls, beta_db=10.0, beta1_db=5.0, beta2_db=5.0, **kwargs):
        """Build parameters from a requested threshold split, normalized so
        the linear thresholds add up to ``beta_db``."""
        b1, b2 = normalize_split(beta_db, beta1_db, beta2_db)
        return cls(beta_db=beta_db, beta1_db=b1, beta2_db=b2, **kwargs)

    @property
    def beta(self):
        return db_to_linear(self.beta_db)

    @property
    def beta1(self):
        return db_to_linear(self.beta1_db)

    @property
    def beta2(self):
        return db_to_linear(self.beta2_db)

    @property
    def energy_budget(self):
        """Total power a source may spend over the T slots."""
        return self.budget_fraction * self.p_slot_max * self.T

    def demand_vector(self, n_sources):
        if isinstance(self.demand, tuple):
            if len(self.demand) != n_sources:
                raise ValidationError(
                    "demand", f"expected {n_sources} entries, got {len(self.demand)}")
            return np.array(self.demand, dtype=int)
        return np.full(n_sources, int(self.demand), dtype=int)

    def violations(self, n_sources=None):
        out = []
        for name in ("beta_db", "beta1_db", "beta2_db", "sigma2", "p_slot_max",
                     "p_slot_min", "g2", "p_relay", "budget_fraction", "path_loss_a"):
            if not math.isfinite(getattr(self, name)):
                out.append(Violation("finite", f"{name} must be finite"))
        if out:
            return out
        lhs = self.beta1 + self.beta2
        if abs(lhs - self.beta) > SPLIT_RTOL * self.beta:
            out.append(Violation(
                "threshold-sum",
                f"linear beta1+beta2 = {float(lhs)!r} differs from linear beta = {float(self.beta)!r}"))
        if not 0 < self.p_slot_min <= self.p_slot_max:
            out.append(Violation("power-bounds", "need 0 < p_slot_min <= p_slot_max"))
        if self.sigma2 <= 0:
            out.append(Violation("sigma2", "noise power must be positive"))
        if self.g2 <= 0:
            out.append(Violation("g2", "relay gain must be positive"))
        if self.p_relay < 0:
            out.append(Violation("p_relay", "relay power must be nonnegative"))
        if self.budget_fraction <= 0:
            out.append(Violation("budget_fraction", "must be positive"))
        if int(self.T) != self.T or self.T < 1:
            out.append(Violation("T", "slot count must be an integer >= 1"))
        demand = self.demand if isinstance(self.demand, tuple) else (self.demand,)
        if any(b < 0 or b > self.T for b in demand):
            out.append(Violation("demand", "need 0 <= B_i <= T"))
        if (n_sources is not None and isinstance(self.demand, tuple)
                and len(self.demand) != n_sources):
            out.append(Violation("demand", f"expected {n_sources} entries"))
        return out

    def to_dict(self):
        d = asdict(self)
        d["demand_mode"] = self.demand_mode.value
        if isinstance(self.demand, tuple):
            d["demand"] = list(self.demand)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("demand"), list):
            d["demand"] = tuple(d["demand"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GainTable:
    """Attenuation (1/d^a) for every transmitter/receiver pair the model uses.

    ``sd[i, j]``: source i to destination j; ``sr[i, r]``: source i to relay
    r; ``rd[r, j]``: relay r to destination j.
    """

    sd: np.ndarray
    sr: np.ndarray
    rd: np.ndarray

    def __post_init__(self):
        for name in ("sd", "sr", "rd"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def gamma(self, tx: NodeId, rx: NodeId) -> float:
        key = (tx.role, rx.role)
        if key == (Role.SOURCE, Role.DESTINATION):
            return float(self.sd[tx.index, rx.index])
        if key == (Role.SOURCE, Role.RELAY):
            return float(self.sr[tx.index, rx.index])
        if key == (Role.RELAY, Role.DESTINATION):
            return float(self.rd[tx.index, rx.index])
        raise KeyError(f"no gain defined from {tx} to {rx}")

    def triplets(self):
        """Yield (tx_role, tx_index, rx_role, rx_index, gamma) rows."""
        blocks = ((Role.SOURCE, Role.DESTINATION, self.sd),
                  (Role.SOURCE, Role.RELAY, self.sr),
                  (Role.RELAY, Role.DESTINATION, self.rd))
        for tx_role, rx_role, arr in blocks:
            for (a, b), g in np.ndenumerate(arr):
                yield tx_role.value, a, rx_role.value, b, float(g)


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    n_sources: int
    n_relays: int
    n_destinations: int
    links: tuple[tuple[int, int], ...]
    relay_links: tuple[tuple[int, int, int], ...]
    gains: GainTable
    params: SystemParams
    seed: int = 0
    placement: Placement = Placement.PER_PAIR
    link_index: dict = field(init=False, repr=False)
    relay_link_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple((int(i), int(j)) for i, j in self.links))
        object.__setattr__(self, "relay_links",
                           tuple((int(i), int(r), int(j)) for i, r, j in self.relay_links))
        object.__setattr__(self, "placement", Placement(self.placement))
        object.__setattr__(self, "link_index", {l: k for k, l in enumerate(self.links)})
        object.__setattr__(self, "relay_link_index",
                           {l: k for k, l in enumerate(self.relay_links)})

    @property
    def T(self):
        return self.params.T

    def relay_links_of(self, link):
        """Indices into ``relay_links`` that relay the given (i, j) link."""
        i, j = link
        return [k for k, (a, _, b) in enumerate(self.relay_links) if (a, b) == (i, j)]

    def links_of_source(self, i):
        return [k for k, (a, _) in enumerate(self.links) if a == i]

    def n_binaries(self, mode="cls"):
        per_slot = len(self.links) + (len(self.relay_links) if mode == "cls" else 0)
        return per_slot * self.T

    def with_params(self, params: SystemParams) -> "NetworkInstance":
        return replace(self, params=params)

    def to_dict(self):
        return {
            "format": INSTANCE_FORMAT,
            "seed": self.seed,
            "placement": self.placement.value,
            "counts": {"sources": self.n_sources, "relays": self.n_relays,
                       "destinations": self.n_destinations},
            "params": self.params.to_dict(),
            "links": [list(l) for l in self.links],
            "relay_links": [list(l) for l in self.relay_links],
            "gains": [list(t) for t in self.gains.triplets()],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != INSTANCE_FORMAT:
            raise ValidationError("format", f"expected {INSTANCE_FORMAT!r}, got {d.get('format')!r}")
        counts = d["counts"]
        n, m, nd = counts["sources"], counts["relays"], counts["destinations"]
        blocks = {("source", "destination"): np.full((n, nd), np.nan),
                  ("source", "relay"): np.full((n, m), np.nan),
                  ("relay", "destination"): np.full((m, nd), np.nan)}
        for tx_role, a, rx_role, b, g in d["gains"]:
            try:
                blocks[(tx_role, rx_role)][a, b] = g
            except (KeyError, IndexError) as exc:
                raise ValidationError("gains", f"bad entry {tx_role}[{a}]->{rx_role}[{b}]") from exc
        gains = GainTable(sd=blocks[("source", "destination")],
                          sr=blocks[("source", "relay")],
                          rd=blocks[("relay", "destination")])
        return cls(n_sources=n, n_relays=m, n_destinations=nd,
                   links=[tuple(l) for l in d["links"]],
                   relay_links=[tuple(l) for l in d["relay_links"]],
                   gains=gains, params=SystemParams.from_dict(d["params"]),
                   seed=d["seed"], placement=d.get("placement", "per_pair"))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path):
        return cls.loads(Path(path).read_text())


def default_links(n, d):
    """Source i sends to destination i mod d."""
    return tuple((i, i % d) for i in range(n))


def full_relay_links(links, m):
    return tuple((i, r, j) for (i, j) in links for r in range(m))


def _check_counts(n, m, d):
    for name, value, low in (("n", n, 1), ("m", m, 0), ("d", d, 1)):
        if int(value) != value or value < low:
            raise ValidationError(name, f"must be an integer >= {low}, got {value!r}")


def generate_instance(seed, n, m, d, params=None, placement="per_pair",
                      links=None) -> NetworkInstance:
    """Draw a random instance.

    ``per_pair`` draws d^a uniformly from [1, 100] independently for every
    ordered pair; ``planar`` drops all nodes uniformly in a 100x100 square
    and uses Euclidean distances floored at 1. Relay gains are drawn relay
    by relay from their own streams, so the first k relays of an instance
    with more relays are identical to an instance drawn with k relays.
    """
    params = SystemParams() if params is None else params
    _check_counts(n, m, d)
    if int(seed) != seed or seed < 0:
        raise ValidationError("seed", "must be a nonnegative integer")
    bad = params.violations(n)
    if bad:
        raise ValidationError("params", "; ".join(map(str, bad)))
    placement = Placement(placement)
    links = default_links(n, d) if links is None else tuple(links)

    s_sd, s_sr, s_rd = (np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(3))
    if placement is Placement.PER_PAIR:
        sd = 1.0 / s_sd.uniform(1.0, 100.0, size=(n, d))
        sr = 1.0 / s_sr.uniform(1.0, 100.0, size=(m, n)).T
        rd = 1.0 / s_rd.uniform(1.0, 100.0, size=(m, d))
    else:
        src = s_sd.uniform(0.0, 100.0, size=(n, 2))
        dst = s_sd.uniform(0.0, 100.0, size=(d, 2))
        rel = s_sr.uniform(0.0, 100.0, size=(m, 2))
        a = params.path_loss_a

        def gain(p, q):
            dist = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1)
            return 1.0 / np.maximum(dist, 1.0) ** a

        sd, sr, rd = gain(src, dst), gain(src, rel), gain(rel, dst)
    return NetworkInstance(
        n_sources=n, n_relays=m, n_destinations=d, links=links,
        relay_links=full_relay_links(links, m),
        gains=GainTable(sd=sd, sr=sr.reshape(n, m), rd=rd.reshape(m, d)),
        params=params, seed=int(seed), placement=placement)


def subset_relays(inst: NetworkInstance, m: int) -> NetworkInstance:
    """Keep only the first ``m`` relays (and the relay links through them)."""
    if not 0 <= m <= inst.n_relays:
        raise ValidationError("m", f"must lie in [0, {inst.n_relays}]")
    gains = GainTable(sd=inst.gains.sd, sr=inst.gains.sr[:, :m], rd=inst.gains.rd[:m, :])
    return replace(inst, n_relays=m, gains=gains,
                   relay_links=tuple(l for l in inst.relay_links if l[1] < m))


def extend_relays(inst: NetworkInstance, count: int, seed: int) -> NetworkInstance:
    """Append ``count`` relays with per-pair gains drawn from ``seed``.

    Existing gains are untouched, so the result nests the input."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), inst.n_relays]))
    new_sr = 1.0 / rng.uniform(1.0, 100.0, size=(count, inst.n_sources)).T
    new_rd = 1.0 / rng.uniform(1.0, 100.0, size=(count, inst.n_destinations))
    m = inst.n_relays + count
    gains = GainTable(sd=inst.gains.sd,
                      sr=np.hstack([inst.gains.sr, new_sr]),
                      rd=np.vstack([inst.gains.rd, new_rd]))
    return replace(inst, n_relays=m, gains=gains,
                   relay_links=full_relay_links(inst.links, m))


def validate_instance(inst: NetworkInstance) -> list[Violation]:
    """Return every broken invariant of ``inst``; empty when well formed."""
    out = list(inst.params.violations(inst.n_sources))
    if not inst.links:
        out.append(Violation("links", "link set must be nonempty"))
    if len(set(inst.links)) != len(inst.links):
        out.append(Violation("links", "duplicate links"))
    for i, j in inst.links:
        if not (0 <= i < inst.n_sources and 0 <= j < inst.n_destinations):
            out.append(Violation("links", f"link ({i},{j}) references a missing node"))
    link_set = set(inst.links)
    for i, r, j in inst.relay_links:
        if (i, j) not in link_set:
            out.append(Violation("relay_links", f"({i},{r},{j}) has no matching link"))
        if not 0 <= r < inst.n_relays:
            out.append(Violation("relay_links", f"({i},{r},{j}) references a missing relay"))
    expected = {"sd": (inst.n_sources, inst.n_destinations),
                "sr": (inst.n_sources, inst.n_relays),
                "rd": (inst.n_relays, inst.n_destinations)}
    for name, shape in expected.items():
        arr = getattr(inst.gains, name)
        if arr.shape != shape:
            out.append(Violation("gains", f"{name} has shape {arr.shape}, expected {shape}"))
            continue
        if not np.all(np.isfinite(arr)):
            out.append(Violation("gains", f"{name} has missing or non-finite entries"))
        elif not np.all(arr > 0):
            out.append(Violation("gain-positivity", f"{name} has entries <= 0"))
    return out


def require_valid(inst: NetworkInstance):
    bad = validate_instance(inst)
    if bad:
        raise ValidationError(bad[0].rule, "; ".join(map(str, bad)))


def nodes(inst: NetworkInstance, role: Role) -> Iterable[NodeId]:
    count = {Role.SOURCE: inst.n_sources, Role.RELAY: inst.n_relays,
             Role.DESTINATION: inst.n_destinations}[Role(role)]
    return (NodeId(Role(role), k) for k in range(count))


__all__: Sequence[str] = [
    "DemandMode", "GainTable", "NetworkInstance", "NodeId", "Placement", "Role",
    "SystemParams", "db_to_linear", "default_links", "extend_relays",
    "generate_instance", "linear_to_db", "normalize_split", "subset_relays",
    "validate_instance",
]
