"""Cluster topology, in-network aggregation, and transmission accounting.

Devices and one aggregator sit at 2-D positions; links exist between nodes
within radio range. A breadth-first spanning tree rooted at the aggregator
carries traffic, and every operation returns a :class:`TransmissionLedger`
counting the scalars that crossed each link, so raw forwarding and
compressed (partial-sum) aggregation can be compared exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .codec import Autoencoder
from .errors import DimensionMismatchError, DisconnectedTopologyError
from .nn import Activation

UPLINK = "uplink"
DOWNLINK = "downlink"
CLUSTER_TO_EDGE = "cluster_to_edge"

EDGE_NODE_ID = -1  # ledger destination for the aggregator -> edge-server link


@dataclass(frozen=True)
class LedgerEntry:
    src: int
    dst: int
    direction: str
    scalars: int

    def __post_init__(self):
        if self.scalars < 0:
            raise ValueError(f"scalar count must be >= 0, got {self.scalars}")


@dataclass
class TransmissionLedger:
    entries: list[LedgerEntry] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, src: int, dst: int, direction: str, scalars: int) -> None:
        self.entries.append(LedgerEntry(src, dst, direction, int(scalars)))

    def total(self, direction: str | None = None) -> int:
        return sum(e.scalars for e in self.entries
                   if direction is None or e.direction == direction)

    def per_link(self) -> dict[tuple[int, int], int]:
        links: dict[tuple[int, int], int] = {}
        for e in self.entries:
            key = (e.src, e.dst)
            links[key] = links.get(key, 0) + e.scalars
        return links

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["link_src", "link_dst", "direction", "scalars"])
            for e in self.entries:
                writer.writerow([e.src, e.dst, e.direction, e.scalars])


@dataclass
class ClusterTopology:
    """Rooted aggregation tree over node positions.

    Node ids are row indices of `positions`; `parent[i]` is -1 for the
    aggregator and the tree parent for every device.
    """

    positions: np.ndarray  # (n, 2) meters
    radio_range: float
    aggregator_id: int
    parent: np.ndarray  # (n,) int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        n = self.positions.shape[0]
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise DimensionMismatchError("positions shape", (n, 2),
                                         self.positions.shape)
        if self.parent.shape != (n,):
            raise DimensionMismatchError("parent length", n, self.parent.shape[0])
        if self.parent[self.aggregator_id] != -1:
            raise ValueError("aggregator parent must be -1")
        # every device must reach the root along parent links within range
        for i in self.device_ids:
            seen = set()
            node = i
            while node != self.aggregator_id:
                if node in seen:
                    raise ValueError(f"parent links contain a cycle at node {i}")
                seen.add(node)
                p = int(self.parent[node])
                if p < 0 or p >= n:
                    raise ValueError(f"node {node} has invalid parent {p}")
                if self._dist(node, p) > self.radio_range:
                    raise ValueError(
                        f"tree edge {node}->{p} exceeds radio range"
                    )
                node = p

    def _dist(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.positions[a] - self.positions[b]))

    @property
    def n_devices(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def device_ids(self) -> list[int]:
        return [i for i in range(self.positions.shape[0]) if i != self.aggregator_id]

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {i: [] for i in range(self.positions.shape[0])}
        for i in self.device_ids:
            out[int(self.parent[i])].append(i)
        return out

    def depths(self) -> dict[int, int]:
        d = {self.aggregator_id: 0}
        for i in sorted(self.device_ids):
            chain = []
            node = i
            while node not in d:
                chain.append(node)
                node = int(self.parent[node])
            base = d[node]
            for off, v in enumerate(reversed(chain), start=1):
                d[v] = base + off
        return d

    def subtree_sizes(self) -> dict[int, int]:
        """Number of devices in each device's subtree (itself included)."""
        sizes = {i: 1 for i in self.device_ids}
        # accumulate child counts from the deepest nodes up
        depths = self.depths()
        for i in sorted(self.device_ids, key=lambda v: -depths[v]):
            p = int(self.parent[i])
            if p != self.aggregator_id:
                sizes[p] += sizes[i]
        return sizes


def build_tree(positions, radio_range: float, aggregator_id: int = 0) -> ClusterTopology:
    """Breadth-first shortest-hop spanning tree over the unit-disk graph.

    Ties among equal-hop parents break to the lowest node id. Raises
    DisconnectedTopologyError listing every unreachable device.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least one device besides the aggregator")
    if not 0 <= aggregator_id < n:
        raise ValueError(f"aggregator_id {aggregator_id} out of range")
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    adjacent = (dist <= radio_range) & ~np.eye(n, dtype=bool)

    parent = np.full(n, -1, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    visited[aggregator_id] = True
    frontier = [aggregator_id]
    while frontier:
        frontier_mask = np.zeros(n, dtype=bool)
        frontier_mask[frontier] = True
        next_frontier = []
        for v in range(n):
            if visited[v]:
                continue
            candidates = np.nonzero(adjacent[v] & frontier_mask)[0]
            if candidates.size:
                parent[v] = int(candidates[0])  # lowest id
                next_frontier.append(v)
        for v in next_frontier:
            visited[v] = True
        frontier = next_frontier
    if not visited.all():
        raise DisconnectedTopologyError(np.nonzero(~visited)[0].tolist())
    return ClusterTopology(positions, float(radio_range), aggregator_id, parent)


def random_topology(n_devices: int, area_size: float, radio_range: float,
                    rng: np.random.Generator, max_retries: int = 50) -> ClusterTopology:
    """Uniform deployment in a square; the centroid-nearest node aggregates.

    Redraws until the radio graph is connected (bounded retries).
    """
    for _ in range(max_retries):
        positions = rng.uniform(0.0, area_size, size=(n_devices + 1, 2))
        centroid = positions.mean(axis=0)
        aggregator_id = int(np.argmin(np.linalg.norm(positions - centroid, axis=1)))
        try:
            return build_tree(positions, radio_range, aggregator_id)
        except DisconnectedTopologyError:
            continue
    raise ValueError(
        f"no connected deployment found in {max_retries} retries "
        f"(n={n_devices}, area={area_size}, range={radio_range})"
    )


# ---------------------------------------------------------------------------
# aggregation protocols
# ---------------------------------------------------------------------------

def _check_readings(topology: ClusterTopology, readings) -> np.ndarray:
    x = np.asarray(readings, dtype=np.float64)
    if x.shape != (topology.n_devices,):
        raise DimensionMismatchError("per-device readings", topology.n_devices,
                                     x.shape[0] if x.ndim == 1 else x.shape)
    return x


def aggregate_raw(topology: ClusterTopology, readings):
    """Leaf-to-root forwarding of raw scalars.

    Link i->parent carries subtree_size(i) scalars; the aggregator ends up
    holding all readings in ascending device-id order.
    """
    x = _check_readings(topology, readings)
    sizes = topology.subtree_sizes()
    ledger = TransmissionLedger(metadata={"mode": "raw"})
    for i in sorted(topology.device_ids):
        ledger.add(i, int(topology.parent[i]), UPLINK, sizes[i])
    return x.copy(), ledger


def distribute_encoder(ae: Autoencoder, topology: ClusterTopology):
    """Hand device i its column of the encoder weights (downlink, M scalars each).

    The encoder bias stays at the aggregator; it is applied once there and
    never broadcast.
    """
    if ae.config.n_devices != topology.n_devices:
        raise DimensionMismatchError("encoder width vs. device count",
                                     topology.n_devices, ae.config.n_devices)
    m = ae.config.latent_dim
    ledger = TransmissionLedger(
        metadata={"mode": "encoder_broadcast",
                  "broadcast_model": "per-device unicast of encoder columns"})
    shards: dict[int, np.ndarray] = {}
    for col, dev in enumerate(sorted(topology.device_ids)):
        shards[dev] = ae.encoder.weights[:, col].copy()
        ledger.add(topology.aggregator_id, dev, DOWNLINK, m)
    return shards, ledger


def aggregate_compressed(topology: ClusterTopology, shards: dict[int, np.ndarray],
                         bias, activation: Activation, readings,
                         per_device_activation: bool = False):
    """Distributed encoding: per-device partials summed up the tree.

    Device i contributes column_i * x_i (M scalars); every node adds its
    children's sums and forwards M scalars; the aggregator adds the bias
    and applies the activation once, reproducing the centralized encoder
    up to summation order.

    per_device_activation=True instead applies the activation at each
    device before summing (the bias still enters at the aggregator, and no
    outer activation is applied). That variant matches no centralized
    computation and exists only for comparison.
    """
    x = _check_readings(topology, readings)
    devices = sorted(topology.device_ids)
    missing = [i for i in devices if i not in shards]
    if missing:
        raise ValueError(f"missing encoder shards for devices: {missing}")
    bias = np.asarray(bias, dtype=np.float64)
    m = bias.shape[0]
    for i in devices:
        if np.asarray(shards[i]).shape != (m,):
            raise DimensionMismatchError(f"shard length for device {i}", m,
                                         np.asarray(shards[i]).shape)

    index = {dev: k for k, dev in enumerate(devices)}
    partial = {}
    for i in devices:
        p = np.asarray(shards[i], dtype=np.float64) * x[index[i]]
        if per_device_activation:
            p = nn.apply_activation(activation, p)
        partial[i] = p

    ledger = TransmissionLedger(metadata={
        "mode": "compressed",
        "per_device_activation": per_device_activation,
    })
    depths = topology.depths()
    sums = {i: partial[i].copy() for i in devices}
    total = np.zeros(m)
    for i in sorted(devices, key=lambda v: (-depths[v], v)):
        p = int(topology.parent[i])
        ledger.add(i, p, UPLINK, m)
        if p == topology.aggregator_id:
            total += sums[i]
        else:
            sums[p] += sums[i]
    if per_device_activation:
        y = total + bias
    else:
        y = nn.apply_activation(activation, total + bias)
    return y, ledger


def cluster_to_edge_cost(mode: str, n_devices: int, latent_dim: int,
                         rounds: int) -> int:
    """Scalars on the aggregator->edge link: N per round raw, M compressed."""
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    if mode == "raw":
        return n_devices * rounds
    if mode == "compressed":
        return latent_dim * rounds
    raise ValueError(f"mode must be 'raw' or 'compressed', got {mode!r}")


# ---------------------------------------------------------------------------
# topology file format
# ---------------------------------------------------------------------------

def save_topology(topology: ClusterTopology, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "x", "y", "parent_id"])
        writer.writerow(["# radio_range", repr(topology.radio_range), "", ""])
        for i in range(topology.positions.shape[0]):
            writer.writerow([i, repr(float(topology.positions[i, 0])),
                             repr(float(topology.positions[i, 1])),
                             int(topology.parent[i])])


def load_topology(path) -> ClusterTopology:
    rows = []
    radio_range = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:4] != ["node_id", "x", "y", "parent_id"]:
            raise ValueError(f"not a topology file: {path}")
        for row in reader:
            if row and row[0] == "# radio_range":
                radio_range = float(row[1])
                continue
            rows.append((int(row[0]), float(row[1]), float(row[2]), int(row[3])))
    if radio_range is None:
        raise ValueError(f"topology file missing radio_range: {path}")
    rows.sort()
    positions = np.array([[x, y] for _, x, y, _ in rows])
    parent = np.array([p for _, _, _, p in rows], dtype=np.int64)
    aggregator_id = int(np.nonzero(parent == -1)[0][0])
    return ClusterTopology(positions, radio_range, aggregator_id, parent)
