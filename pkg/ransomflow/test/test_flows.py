import io
import os
import tempfile
import unittest

import numpy as np

from ransomflow import ledger, addrgraph, cluster, attribution, campaign, flows
from ransomflow.attribution import Tag
from ransomflow.flows import KeyAddress
from ransomflow.test.ledgers import write_ledger, random_ledger, sat, T0
from ransomflow.test.test_addrgraph import flat_rates


class FlowsCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "ledger.jsonl")

    def tearDown(self):
        self.tmp.cleanup()

    def build(self, txs, seeds, family = "Fam"):
        write_ledger(self.path, txs)
        self.store = ledger.ingest(self.path)
        self.partition = cluster.compute_partition(self.store)
        self.graph = addrgraph.build_address_graph(self.store, flat_rates(self.store))
        c = campaign.expand(seeds, self.partition, self.store, family = family)
        return flows.build_outrel(c, self.graph, store = self.store)


class TestOutRel(FlowsCase):

    def test_nodes_and_edges(self):
        g = self.build([("t", 1, T0, [("A", 3)], [("X", 1), ("Y", 2)]),
                        ("u", 2, T0, [("Q", 1)], [("R", 1)])], ["A"])
        self.assertEqual(g.node_classes(), {"A" : "expanded", "X" : "external", "Y" : "external"})
        self.assertEqual([(s, d) for s, d, c, v, u in g.edges()], [("A", "X"), ("A", "Y")])

    def test_isolated_node(self):
        g = self.build([("t", 1, T0, [], [("A", 3)])], ["A"])
        self.assertEqual(g.n_edges, 0)
        self.assertEqual(g.node_classes(), {"A" : "expanded"})

    def test_filter_oracle(self):
        txs = random_ledger(11, n_tx = 400, n_addr = 150)
        seeds = ["addr{:04d}".format(i) for i in range(0, 150, 13)]
        g = self.build(txs, seeds)
        c = campaign.expand(seeds, self.partition, self.store, family = "Fam")
        expanded = set(c.expanded_addresses)
        expected = [(e.src, e.dst, e.tx_count, e.value_sat) for e in self.graph.edges() if e.src in expanded]
        self.assertEqual([(s, d, n, v) for s, d, n, v, u in g.edges()], expected)

    def test_write_outrel(self):
        g = self.build([("t", 1, T0, [("A", 3), ("B", 1)], [("X", 2), ("C", 2)]),
                        ("u", 2, T0, [("C", 2)], [("A", 1), ("Z", 1)])], ["A"])
        f = io.StringIO()
        flows.write_outrel(g, f)
        #half-satoshi flows round to even, zero flows keep their edge
        self.assertEqual(f.getvalue().splitlines(), ["src,dst,value_sat,src_class,dst_class",
                                                     "A,C,2,expanded,external", "A,X,2,expanded,external",
                                                     "B,C,0,expanded,external", "B,X,0,expanded,external"])


class TestKeyAddresses(FlowsCase):

    def test_threshold(self):
        g = self.build([("t1", 1, T0, [("A", 1)], [("X", 1)]),
                        ("t2", 2, T0, [("B", 1)], [("X", 1)]),
                        ("t3", 3, T0, [("A", 1)], [("Y", 1)])], ["A", "B"])
        keys = flows.key_addresses(g, mode = "distinct_sources")
        self.assertEqual(keys, [KeyAddress("X", "Fam", 2, False, ())])

    def test_distinct_senders(self):
        txs = [("t1", 1, T0, [("A", 1)], [("X", 1)]),
               ("t2", 2, T0, [("A", 1)], [("X", 1)])]
        g = self.build(txs, ["A"])
        self.assertEqual(flows.key_addresses(g, mode = "distinct_sources"), [])
        self.assertEqual(flows.key_addresses(g, mode = "distinct_txs"),
                         [KeyAddress("X", "Fam", 2, False, ())])

    def test_distinct_txs_skip_change(self):
        g = self.build([("t1", 1, T0, [("A", 2)], [("X", 1), ("A", 1)]),
                        ("t2", 2, T0, [("A", 1)], [("A", 1)])], ["A"])
        ids, counts = flows.indegrees(g, mode = "distinct_txs")
        self.assertEqual([(self.store.addresses[i], int(n)) for i, n in zip(ids, counts)], [("X", 1)])

    def test_expanded_key_and_order(self):
        #A, B, C co-spend into K, K is later spent with A: K is an expanded key
        g = self.build([("t1", 1, T0, [("A", 1), ("B", 1), ("C", 1)], [("K", 3)]),
                        ("t2", 2, T0, [("K", 3), ("A", 1)], [("W", 4)]),
                        ("t3", 3, T0, [("D", 1)], [("W", 1)])], ["A"])
        keys = flows.key_addresses(g, mode = "distinct_sources")
        self.assertEqual(keys, [KeyAddress("K", "Fam", 3, True, ()), KeyAddress("W", "Fam", 2, False, ())])

    def test_edge_removal_lowers_indegree_by_one(self):
        txs = random_ledger(13, n_tx = 600, n_addr = 120)
        g = self.build(txs, ["addr{:04d}".format(i) for i in range(0, 120, 5)])
        self.assertTrue(g.n_edges > 20)
        full = dict(zip(*[x.tolist() for x in flows.indegrees(g, mode = "distinct_sources")]))
        rng = np.random.default_rng(13)
        for k in rng.choice(g.n_edges, 20, replace = False):
            keep = np.arange(g.n_edges) != k
            h = flows.OutRelGraph(g.family, g.addresses, g.expanded, g.src[keep], g.dst[keep],
                                  g.tx_count[keep], g.value_sat[keep], g.value_usd[keep])
            reduced = dict(zip(*[x.tolist() for x in flows.indegrees(h, mode = "distinct_sources")]))
            for node, n in full.items():
                self.assertIn(n - reduced.get(node, 0), (0, 1) if node == g.dst[k] else (0,))

    def test_invalid_mode(self):
        g = self.build([("t", 1, T0, [("A", 1)], [("X", 1)])], ["A"])
        with self.assertRaises(ValueError):
            flows.key_addresses(g, mode = "edges")


class TestReports(unittest.TestCase):

    def test_indegree_stats(self):
        keys = {"F" : [KeyAddress("X", "F", 2, False, ()), KeyAddress("Y", "F", 4, False, ())]}
        s = flows.indegree_stats(keys)
        self.assertEqual((s.count, s.mean, s.median, s.max, s.empty), (2, 3., 3., 4, False))
        self.assertAlmostEqual(s.std, 2 ** 0.5)

    def test_indegree_stats_empty(self):
        s = flows.indegree_stats({"F" : [], "G" : []})
        self.assertTrue(s.empty)
        self.assertEqual(s.count, 0)
        self.assertIsNone(s.mean)

    def test_exit_points(self):
        partition = cluster.Partition(["E1", "E2", "M", "U"], [0, 0, 2, 3])
        tags = [Tag("E2", "BTC-e.com", "exchange", ""), Tag("M", "Helix", "mixer", "")]
        attr = attribution.attribute_clusters(tags, partition)
        keys = [KeyAddress("E1", "F", 5, False, ()), KeyAddress("U", "F", 3, False, ()),
                KeyAddress("M", "G", 2, False, ()), KeyAddress("E2", "G", 2, False, ())]
        report = flows.exit_points(keys, partition, attr)
        self.assertEqual(report.keys[0].exit_tags, ("BTC-e.com",))
        self.assertEqual(report.keys[1].exit_tags, ())
        self.assertEqual(dict(report.category_counts), {"exchange" : 2, "gambling" : 0, "mixer" : 1, "other" : 0})
        self.assertEqual(report.untagged, 1)
        self.assertEqual(report.tagged_clusters, 2)
        self.assertEqual(dict(report.label_counts), {("F", "BTC-e.com") : 1, ("G", "BTC-e.com") : 1,
                                                     ("G", "Helix") : 1})
        f = io.StringIO()
        flows.write_exit_categories(report, f)
        self.assertEqual(f.getvalue().splitlines(), ["category,key_addresses", "exchange,2", "gambling,0",
                                                     "mixer,1", "other,0", "untagged,1"])

    def test_cross_family_links(self):
        keys = {"B" : [KeyAddress("X", "B", 2, False, ()), KeyAddress("Y", "B", 2, False, ())],
                "A" : [KeyAddress("Y", "A", 3, False, ()), KeyAddress("X", "A", 2, False, ())],
                "C" : [KeyAddress("Z", "C", 2, False, ())]}
        self.assertEqual(flows.cross_family_links(keys), [flows.FamilyLink("A", "B", ("X", "Y"))])
        self.assertEqual(flows.cross_family_links({"A" : keys["A"], "C" : keys["C"]}), [])

    def test_key_table(self):
        keys = {"F" : [KeyAddress("X", "F", 2, True, ()), KeyAddress("Y", "F", 2, False, ())],
                "G" : [KeyAddress("Z", "G", 2, False, ())]}
        f = io.StringIO()
        flows.write_key_table(keys, f)
        self.assertEqual(f.getvalue().splitlines(), ["family,new_key_addr,key_expanded_addr", "F,1,1", "G,1,0"])


if __name__ == "__main__":
    unittest.main()
