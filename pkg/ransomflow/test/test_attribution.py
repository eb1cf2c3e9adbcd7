import io
import os
import tempfile
import unittest

import numpy as np

from ransomflow import attribution
from ransomflow.attribution import Tag
from ransomflow.cluster import Partition
from ransomflow.conf import InputError
from ransomflow.test.ledgers import write_csv


class TestLoadTags(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "tags.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def test_duplicates(self):
        write_csv(self.path, attribution.TAG_HEADER, [("A", "BTC-e.com", "exchange", "wallet explorer"),
                                                      ("B", "SatoshiDice", "gambling", "forum"),
                                                      ("A", "BTC-e.com", "exchange", "another source")])
        tags = attribution.load_tags(self.path)
        self.assertEqual(len(tags), 2)
        self.assertEqual(tags[0], Tag("A", "BTC-e.com", "exchange", "wallet explorer"))

    def test_unknown_category(self):
        write_csv(self.path, attribution.TAG_HEADER, [("A", "Casino", "casino", "")])
        with self.assertWarns(UserWarning):
            tags = attribution.load_tags(self.path)
        self.assertEqual(tags[0].category, "other")

    def test_category_is_case_insensitive(self):
        write_csv(self.path, attribution.TAG_HEADER, [("A", "Mixer", "Mixer", "")])
        self.assertEqual(attribution.load_tags(self.path)[0].category, "mixer")

    def test_missing_header(self):
        write_csv(self.path, ("address", "label"), [("A", "x")])
        with self.assertRaises(InputError):
            attribution.load_tags(self.path)

    def test_empty_label(self):
        write_csv(self.path, attribution.TAG_HEADER, [("A", "", "exchange", "")])
        with self.assertRaises(InputError) as cm:
            attribution.load_tags(self.path)
        self.assertIn("line 2", str(cm.exception))

    def test_distinct_pairs(self):
        rng = np.random.default_rng(0)
        rows = [("addr{}".format(rng.integers(0, 50)), "label{}".format(rng.integers(0, 5)), "exchange", "")
                for i in range(500)]
        write_csv(self.path, attribution.TAG_HEADER, rows)
        self.assertEqual(len(attribution.load_tags(self.path)), len(set((a, l) for a, l, c, s in rows)))


class TestAttributeClusters(unittest.TestCase):

    def setUp(self):
        #clusters {A,B,C}, {D}, {E,F}
        self.partition = Partition(["A", "B", "C", "D", "E", "F"], [0, 0, 0, 3, 4, 4])

    def test_cluster_propagation(self):
        tag = Tag("B", "BTC-e.com", "exchange", "")
        a = attribution.attribute_clusters([tag], self.partition)
        for address in "ABC":
            self.assertEqual(a.labels(self.partition.cluster_of(address)), ("BTC-e.com",))
        self.assertEqual(a.labels("D"), ())
        self.assertEqual(len(a), 1)

    def test_orphans(self):
        tag = Tag("Z", "Unknown", "other", "")
        a = attribution.attribute_clusters([Tag("D", "x", "mixer", ""), tag], self.partition)
        self.assertEqual(a.orphans, [tag])
        self.assertEqual(list(a.tags_by_cluster), ["D"])
        f = io.StringIO()
        attribution.write_orphans(a, f)
        self.assertEqual(f.getvalue().splitlines()[1], "Z,Unknown,address not in ledger")

    def test_conflicting_tags_are_all_reported(self):
        tags = [Tag("E", "Exchange1", "exchange", ""), Tag("F", "Mixer1", "mixer", "")]
        a = attribution.attribute_clusters(tags, self.partition)
        self.assertEqual(a.labels("E"), ("Exchange1", "Mixer1"))
        self.assertEqual(a.categories("E"), ("exchange", "mixer"))

    def test_group_by(self):
        rng = np.random.default_rng(1)
        addresses = self.partition.addresses
        tags = [Tag(addresses[rng.integers(0, 6)], "label{}".format(i), "other", "") for i in range(10)]
        a = attribution.attribute_clusters(tags, self.partition)
        expected = {}
        for t in tags:
            expected.setdefault(self.partition.cluster_of(t.address), set()).add(t)
        self.assertEqual({c : set(t) for c, t in a.tags_by_cluster.items()}, expected)

    def test_new_tags_keep_attributions(self):
        rng = np.random.default_rng(2)
        addresses = list(self.partition.addresses) + ["unknown"]
        tags = []
        before = attribution.attribute_clusters(tags, self.partition)
        for i in range(30):
            tags = tags + [Tag(addresses[rng.integers(0, 7)], "label{}".format(rng.integers(0, 4)), "other", "")]
            after = attribution.attribute_clusters(tags, self.partition)
            for cluster, old in before.tags_by_cluster.items():
                self.assertTrue(set(old) <= set(after.tags(cluster)))
            before = after


if __name__ == "__main__":
    unittest.main()
