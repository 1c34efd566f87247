"""Topology construction, aggregation protocols, and the transmission ledger."""

import numpy as np
import pytest

from dcslab import codec, wsn
from dcslab.codec import AutoencoderConfig
from dcslab.errors import DimensionMismatchError, DisconnectedTopologyError
from dcslab.nn import Activation


def chain(n, spacing=1.0):
    # aggregator at 0, devices strung out along a line
    return wsn.build_tree([(i * spacing, 0.0) for i in range(n + 1)], spacing, 0)


def star(n, radius=1.0):
    angles = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    positions = [(0.0, 0.0)] + [(radius * np.cos(a), radius * np.sin(a))
                                for a in angles]
    return wsn.build_tree(positions, radius, 0)


def fresh_ae(n, m, seed=0):
    cfg = AutoencoderConfig(n_devices=n, latent_dim=m, noise_sigma=0.0)
    return codec.init_autoencoder(cfg, np.random.default_rng(seed))


class TestBuildTree:
    def test_single_device(self):
        topo = wsn.build_tree([(0.0, 0.0), (0.5, 0.0)], 1.0, 0)
        assert topo.parent.tolist() == [-1, 0]
        assert topo.depths()[1] == 1

    def test_collinear_chain_at_exact_range(self):
        topo = chain(3, spacing=1.0)
        assert topo.parent.tolist() == [-1, 0, 1, 2]
        assert topo.depths() == {0: 0, 1: 1, 2: 2, 3: 3}

    def test_disconnected_lists_unreachable(self):
        with pytest.raises(DisconnectedTopologyError) as err:
            wsn.build_tree([(0.0, 0.0), (0.5, 0.0), (10.0, 0.0)], 1.0, 0)
        assert err.value.unreachable == (2,)

    def test_parent_tie_breaks_to_lowest_id(self):
        # nodes 1 and 2 are both one hop from the root and both reach node 3
        positions = [(0.0, 0.0), (1.0, 0.6), (1.0, -0.6), (2.0, 0.0)]
        topo = wsn.build_tree(positions, 1.5, 0)
        assert int(topo.parent[3]) == 1

    def test_tree_validity_random(self):
        topo = wsn.random_topology(50, 100.0, 30.0, np.random.default_rng(0))
        # exactly N edges, all devices reach the root
        assert sum(1 for i in topo.device_ids if topo.parent[i] >= 0) == 50
        depths = topo.depths()
        assert set(depths) == set(range(51))
        assert all(depths[i] >= 1 for i in topo.device_ids)

    def test_random_topology_deterministic(self):
        a = wsn.random_topology(20, 50.0, 20.0, np.random.default_rng(5))
        b = wsn.random_topology(20, 50.0, 20.0, np.random.default_rng(5))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.parent, b.parent)


class TestAggregateRaw:
    def test_star_each_link_carries_one(self):
        topo = star(6)
        readings = np.linspace(0.1, 0.6, 6)
        assembled, ledger = wsn.aggregate_raw(topo, readings)
        assert np.array_equal(assembled, readings)
        assert all(e.scalars == 1 for e in ledger.entries)
        assert ledger.total() == 6

    def test_chain_counts_are_subtree_sizes(self):
        topo = chain(3)
        _, ledger = wsn.aggregate_raw(topo, [0.1, 0.2, 0.3])
        assert sorted(e.scalars for e in ledger.entries) == [1, 2, 3]
        assert ledger.total() == 6

    def test_lossless_on_random_topology(self):
        topo = wsn.random_topology(30, 80.0, 25.0, np.random.default_rng(2))
        readings = np.random.default_rng(3).uniform(0, 1, 30)
        assembled, _ = wsn.aggregate_raw(topo, readings)
        assert np.array_equal(assembled, readings)

    def test_conservation_total_equals_depth_sum(self):
        topo = wsn.random_topology(40, 90.0, 28.0, np.random.default_rng(4))
        _, ledger = wsn.aggregate_raw(topo, np.zeros(40))
        depths = topo.depths()
        sizes = topo.subtree_sizes()
        assert ledger.total() == sum(sizes.values())
        assert ledger.total() == sum(depths[i] for i in topo.device_ids)

    def test_raw_total_independent_of_latent_dim(self):
        topo = chain(4)
        totals = set()
        for m in (1, 2, 3):
            _, ledger = wsn.aggregate_raw(topo, np.zeros(4))
            totals.add(ledger.total())
        assert len(totals) == 1


class TestDistributeEncoder:
    def test_single_device_three_latents(self):
        topo = wsn.build_tree([(0.0, 0.0), (0.5, 0.0)], 1.0, 0)
        _, ledger = wsn.distribute_encoder(fresh_ae(1, 1), topo)
        assert ledger.total(wsn.DOWNLINK) == 1

    def test_total_is_n_times_m(self):
        topo = star(4)
        _, ledger = wsn.distribute_encoder(fresh_ae(4, 2), topo)
        assert ledger.total(wsn.DOWNLINK) == 8

    def test_shards_equal_weight_columns(self):
        topo = star(5)
        ae = fresh_ae(5, 3)
        shards, _ = wsn.distribute_encoder(ae, topo)
        for col, dev in enumerate(sorted(topo.device_ids)):
            np.testing.assert_array_equal(shards[dev], ae.encoder.weights[:, col])

    def test_size_mismatch_rejected(self):
        topo = star(4)
        with pytest.raises(DimensionMismatchError):
            wsn.distribute_encoder(fresh_ae(5, 2), topo)


class TestAggregateCompressed:
    def test_matches_centralized_encoder(self):
        topo = wsn.random_topology(50, 100.0, 30.0, np.random.default_rng(10))
        ae = fresh_ae(50, 8, seed=11)
        shards, _ = wsn.distribute_encoder(ae, topo)
        readings = np.random.default_rng(12).uniform(0, 1, 50)
        y, _ = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                        ae.encoder.activation, readings)
        np.testing.assert_allclose(y, codec.encode(ae, readings), atol=1e-5)

    def test_chain_compressed_cheaper_than_raw(self):
        topo = chain(3)
        ae = fresh_ae(3, 1)
        shards, _ = wsn.distribute_encoder(ae, topo)
        readings = np.array([0.1, 0.2, 0.3])
        _, comp = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                           ae.encoder.activation, readings)
        _, raw = wsn.aggregate_raw(topo, readings)
        assert comp.total() == 3
        assert raw.total() == 6

    def test_single_device_identity_no_bias(self):
        topo = wsn.build_tree([(0.0, 0.0), (0.5, 0.0)], 1.0, 0)
        shards = {1: np.array([0.5, -2.0])}
        y, _ = wsn.aggregate_compressed(topo, shards, np.zeros(2),
                                        Activation.IDENTITY, [0.4])
        np.testing.assert_allclose(y, [0.2, -0.8])

    def test_missing_shard_rejected(self):
        topo = star(3)
        shards = {1: np.zeros(2), 2: np.zeros(2)}  # device 3 missing
        with pytest.raises(ValueError, match="missing"):
            wsn.aggregate_compressed(topo, shards, np.zeros(2),
                                     Activation.IDENTITY, [0.1, 0.2, 0.3])

    def test_uplink_total_is_n_times_m(self):
        topo = wsn.random_topology(25, 60.0, 22.0, np.random.default_rng(13))
        ae = fresh_ae(25, 4, seed=14)
        shards, _ = wsn.distribute_encoder(ae, topo)
        _, ledger = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                             ae.encoder.activation,
                                             np.zeros(25))
        assert ledger.total(wsn.UPLINK) == 25 * 4

    def test_compressed_total_independent_of_data(self):
        topo = star(6)
        ae = fresh_ae(6, 3, seed=15)
        shards, _ = wsn.distribute_encoder(ae, topo)
        totals = set()
        for seed in range(3):
            readings = np.random.default_rng(seed).uniform(0, 1, 6)
            _, ledger = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                                 ae.encoder.activation, readings)
            totals.add(ledger.total())
        assert totals == {18}

    def test_per_device_activation_variant_differs(self):
        topo = star(4)
        ae = fresh_ae(4, 2, seed=16)
        # nonlinear activation so per-device application cannot commute
        shards, _ = wsn.distribute_encoder(ae, topo)
        readings = np.random.default_rng(17).uniform(0.5, 1.0, 4)
        y_sum, _ = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                            Activation.SIGMOID, readings)
        y_dev, ledger = wsn.aggregate_compressed(topo, shards, ae.encoder.bias,
                                                 Activation.SIGMOID, readings,
                                                 per_device_activation=True)
        assert ledger.metadata["per_device_activation"] is True
        assert not np.allclose(y_sum, y_dev)


class TestClusterToEdge:
    def test_dimension_ratio(self):
        raw = wsn.cluster_to_edge_cost("raw", 784, 128, 1)
        comp = wsn.cluster_to_edge_cost("compressed", 784, 128, 1)
        assert raw / comp == 6.125

    def test_no_compression_when_m_equals_n(self):
        assert wsn.cluster_to_edge_cost("raw", 32, 32, 5) == \
            wsn.cluster_to_edge_cost("compressed", 32, 32, 5)

    def test_zero_rounds(self):
        assert wsn.cluster_to_edge_cost("raw", 10, 2, 0) == 0
        assert wsn.cluster_to_edge_cost("compressed", 10, 2, 0) == 0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            wsn.cluster_to_edge_cost("zip", 10, 2, 1)


class TestFiles:
    def test_topology_roundtrip(self, tmp_path):
        topo = wsn.random_topology(12, 40.0, 18.0, np.random.default_rng(20))
        path = tmp_path / "topology.csv"
        wsn.save_topology(topo, path)
        loaded = wsn.load_topology(path)
        assert np.array_equal(loaded.positions, topo.positions)
        assert np.array_equal(loaded.parent, topo.parent)
        assert loaded.aggregator_id == topo.aggregator_id

    def test_ledger_csv(self, tmp_path):
        topo = chain(3)
        _, ledger = wsn.aggregate_raw(topo, [0.1, 0.2, 0.3])
        path = tmp_path / "ledger.csv"
        ledger.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "link_src,link_dst,direction,scalars"
        assert len(lines) == 1 + len(ledger.entries)
