"""
Outgoing-relationships graphs, key addresses and exit points.

For each family the outgoing-relationships graph holds every out-edge of the
family's time-filtered expanded addresses. The indegree of a node is the
number of unique incoming relationships from expanded addresses. A node with
indegree of at least two is a key address (a collector) of the family. Key
addresses that are themselves expanded addresses are "key expanded", the
others are "new key" addresses. Exit points are key addresses whose cluster
carries a tag.

Indegree modes
--------------

* 'distinct_sources' counts distinct expanded source addresses (default).
* 'distinct_txs' counts distinct transactions in which an expanded address
  pays the node.
"""

from __future__ import absolute_import, print_function, division

import csv
import itertools
from collections import namedtuple, OrderedDict

import numpy as np

from ransomflow.conf import I64DTYPE, INDEGREE_MODES, get_default_config_option
from ransomflow.attribution import CATEGORIES
from ransomflow.print_tools import print1, print2

#: minimum indegree of a key address
KEY_INDEGREE = 2

#: a collector address of one family
KeyAddress = namedtuple("KeyAddress", ["address", "family", "indegree", "was_expanded", "exit_tags"])

#: aggregate indegree statistics over all families
IndegreeSummary = namedtuple("IndegreeSummary", ["count", "mean", "median", "max", "std", "empty"])

#: exit point resolution of key addresses
ExitReport = namedtuple("ExitReport", ["keys", "category_counts", "untagged", "tagged_clusters", "label_counts"])

#: a pair of families sharing key addresses
FamilyLink = namedtuple("FamilyLink", ["family1", "family2", "shared"])

class OutRelGraph(object):
    """Outgoing-relationships graph of one family.

    Edges are the out-edges of the address graph whose source is in the
    family's expanded_tf set, sorted by (src, dst). Nodes are the expanded_tf
    addresses plus all destinations; a node is of class 'expanded' if it is
    in expanded_tf and 'external' otherwise.
    """
    def __init__(self, family, addresses, expanded, src, dst, tx_count, value_sat, value_usd, store = None):
        self.family = family
        self.addresses = addresses
        self.expanded = np.asarray(expanded, I64DTYPE)
        self.src = src
        self.dst = dst
        self.tx_count = tx_count
        self.value_sat = value_sat
        self.value_usd = value_usd
        self.nodes = np.union1d(self.expanded, dst).astype(I64DTYPE)
        self.store = store

    @property
    def n_edges(self):
        return len(self.src)

    def __repr__(self):
        return "OutRelGraph({0}): {1} nodes, {2} edges".format(self.family, len(self.nodes), self.n_edges)

    def is_expanded(self, ids):
        """Returns boolean array, True for ids of class 'expanded'."""
        return np.isin(ids, self.expanded)

    def node_classes(self):
        """Returns a dict address -> 'expanded' or 'external' for all nodes."""
        mask = self.is_expanded(self.nodes)
        return OrderedDict((self.addresses[i], "expanded" if m else "external") for i, m in zip(self.nodes, mask))

    def edges(self):
        """Iterates over (src, dst, tx_count, value_sat, value_usd) tuples."""
        a = self.addresses
        for k in range(self.n_edges):
            yield a[self.src[k]], a[self.dst[k]], int(self.tx_count[k]), int(self.value_sat[k]), float(self.value_usd[k])

def build_outrel(campaign, address_graph, store = None):
    """Builds the outgoing-relationships graph of a time-filtered campaign.

    Parameters
    ----------
    campaign : FamilyCampaign
        Time-filtered campaign.
    address_graph : AddressGraph
        Address graph of the same ledger.
    store : LedgerStore, optional
        Ledger, needed for the 'distinct_txs' indegree mode.

    Returns
    -------
    graph : OutRelGraph
    """
    g = address_graph
    ids = campaign.expanded_tf
    starts = g.out_ptr[ids]
    lengths = g.out_ptr[ids + 1] - starts
    offsets = np.zeros(len(ids) + 1, I64DTYPE)
    np.cumsum(lengths, out = offsets[1:])
    index = np.repeat(starts - offsets[:-1], lengths) + np.arange(offsets[-1], dtype = I64DTYPE)
    graph = OutRelGraph(campaign.family, g.addresses, ids, g.src[index], g.dst[index],
                        g.tx_count[index], g.value_sat[index], g.value_usd[index], store = store)
    print2("Built {}".format(graph))
    return graph

def _paying_transactions(graph):
    """Returns (dst, tx) pairs of transactions in which an expanded address
    pays dst (explicit change excluded)."""
    store = graph.store
    if store is None:
        raise ValueError("Indegree mode 'distinct_txs' requires the ledger store")
    ntx = store.n_transactions
    if ntx == 0:
        return np.zeros(0, I64DTYPE), np.zeros(0, I64DTYPE)
    in_tx = np.repeat(np.arange(ntx, dtype = I64DTYPE), np.diff(store.in_ptr))
    expanded_input = np.zeros(ntx, bool)
    expanded_input[in_tx[graph.is_expanded(store.in_addr)]] = True
    out_tx = np.repeat(np.arange(ntx, dtype = I64DTYPE), np.diff(store.out_ptr))
    mask = expanded_input[out_tx]
    out_tx, out_addr = out_tx[mask], store.out_addr[mask]
    n = store.n_addresses
    change = np.isin(out_tx * n + out_addr, in_tx * n + store.in_addr)
    pairs = np.unique(out_addr[~change] * ntx + out_tx[~change])
    return pairs // ntx, pairs % ntx

def indegrees(graph, mode = None):
    """Returns (node ids, indegrees) of all destination nodes of the graph.

    Parameters
    ----------
    graph : OutRelGraph
        Family graph.
    mode : str, optional
        'distinct_sources' or 'distinct_txs'. Defaults to the configured mode.
    """
    mode = get_default_config_option("indegree_mode", mode)
    if mode not in INDEGREE_MODES:
        raise ValueError("Unsupported indegree mode '{}'".format(mode))
    if mode == "distinct_sources":
        #(src, dst) pairs are unique and all sources are expanded
        dst = graph.dst
    else:
        dst, tx = _paying_transactions(graph)
    ids, counts = np.unique(dst, return_counts = True)
    return ids.astype(I64DTYPE), counts.astype(I64DTYPE)

def key_addresses(graph, mode = None):
    """Identifies key (collector) addresses of a family graph.

    Parameters
    ----------
    graph : OutRelGraph
        Family graph.
    mode : str, optional
        Indegree mode, defaults to the configured `indegree_mode`.

    Returns
    -------
    keys : list of KeyAddress
        Nodes with indegree >= 2, sorted by indegree descending, then by
        address ascending.
    """
    ids, counts = indegrees(graph, mode)
    mask = counts >= KEY_INDEGREE
    ids, counts = ids[mask], counts[mask]
    expanded = graph.is_expanded(ids)
    #ids are in address order, so a stable sort on -indegree breaks ties by address
    order = np.argsort(-counts, kind = "stable")
    keys = [KeyAddress(graph.addresses[ids[k]], graph.family, int(counts[k]), bool(expanded[k]), ())
            for k in order]
    print2("Family {0}: {1} key addresses".format(graph.family, len(keys)))
    return keys

def indegree_stats(keys_by_family):
    """Computes indegree statistics of key addresses over all families.

    A key address of several families counts once per family.

    Parameters
    ----------
    keys_by_family : dict
        Family name -> list of KeyAddress.

    Returns
    -------
    summary : IndegreeSummary
        Count, mean, median, max and sample standard deviation (None for a
        single key). All but count are None and `empty` is True if there are
        no key addresses.
    """
    values = np.array([k.indegree for keys in keys_by_family.values() for k in keys], I64DTYPE)
    if len(values) == 0:
        return IndegreeSummary(0, None, None, None, None, True)
    std = float(np.std(values, ddof = 1)) if len(values) > 1 else None
    return IndegreeSummary(len(values), float(np.mean(values)), float(np.median(values)),
                           int(values.max()), std, False)

def exit_points(keys, partition, attribution):
    """Annotates key addresses with the tags of their clusters.

    Parameters
    ----------
    keys : list of KeyAddress
        Key addresses of one or several families.
    partition : Partition
        Co-spend partition.
    attribution : ClusterAttribution
        Cluster tags.

    Returns
    -------
    report : ExitReport
        Annotated keys (exit_tags = sorted distinct labels), number of keys
        per category (a key whose cluster has several categories counts in
        each), number of untagged keys, number of distinct tagged clusters and
        number of keys per (family, label).
    """
    annotated = []
    category_counts = OrderedDict((c, 0) for c in CATEGORIES)
    label_counts = {}
    clusters = set()
    untagged = 0
    for key in keys:
        cluster = partition.cluster_of(key.address)
        labels = attribution.labels(cluster) if cluster is not None else ()
        annotated.append(key._replace(exit_tags = labels))
        if not labels:
            untagged += 1
            continue
        clusters.add(cluster)
        for c in attribution.categories(cluster):
            category_counts[c] += 1
        for label in labels:
            label_counts[(key.family, label)] = label_counts.get((key.family, label), 0) + 1
    report = ExitReport(annotated, category_counts, untagged, len(clusters),
                        OrderedDict(sorted(label_counts.items())))
    print1("Resolved {0} exit points in {1} tagged clusters".format(len(keys) - untagged, len(clusters)))
    return report

def cross_family_links(keys_by_family):
    """Returns all family pairs that share at least one key address.

    Returns
    -------
    links : list of FamilyLink
        Sorted by (family1, family2), family1 < family2, shared addresses
        sorted.
    """
    sets = OrderedDict((f, set(k.address for k in keys)) for f, keys in sorted(keys_by_family.items()))
    links = []
    for f1, f2 in itertools.combinations(sets, 2):
        shared = sets[f1] & sets[f2]
        if shared:
            links.append(FamilyLink(f1, f2, tuple(sorted(shared))))
    return links

def _open_writer(file):
    if isinstance(file, str):
        return open(file, "w", newline = "", encoding = "utf-8"), True
    return file, False

def write_key_table(keys_by_family, file):
    """Writes CSV ``family,new_key_addr,key_expanded_addr``.

    Rows are sorted by total key count descending, then by family.
    """
    rows = []
    for family, keys in keys_by_family.items():
        expanded = sum(1 for k in keys if k.was_expanded)
        rows.append((family, len(keys) - expanded, expanded))
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "new_key_addr", "key_expanded_addr"))
        writer.writerows(sorted(rows, key = lambda r: (-(r[1] + r[2]), r[0])))
    finally:
        if own_fid == True:
            f.close()

def write_keys(keys, file):
    """Writes CSV ``family,address,indegree,was_expanded,exit_tags``.

    Multiple exit tags are joined with ';'.
    """
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "address", "indegree", "was_expanded", "exit_tags"))
        for k in keys:
            writer.writerow((k.family, k.address, k.indegree, int(k.was_expanded), ";".join(k.exit_tags)))
    finally:
        if own_fid == True:
            f.close()

def write_outrel(graph, file):
    """Writes the family graph as CSV ``src,dst,value_sat,src_class,dst_class``."""
    expanded = graph.is_expanded(graph.dst)
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("src", "dst", "value_sat", "src_class", "dst_class"))
        a = graph.addresses
        for s, d, v, e in zip(graph.src, graph.dst, graph.value_sat, expanded):
            writer.writerow((a[s], a[d], v, "expanded", "expanded" if e else "external"))
    finally:
        if own_fid == True:
            f.close()

def write_exit_categories(report, file):
    """Writes CSV ``category,key_addresses`` including an 'untagged' row."""
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("category", "key_addresses"))
        for category, count in report.category_counts.items():
            writer.writerow((category, count))
        writer.writerow(("untagged", report.untagged))
    finally:
        if own_fid == True:
            f.close()

def write_links(links, file):
    """Writes CSV ``family1,family2,shared`` with shared addresses joined by ';'."""
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family1", "family2", "shared"))
        for link in links:
            writer.writerow((link.family1, link.family2, ";".join(link.shared)))
    finally:
        if own_fid == True:
            f.close()
