"""
Multiple-input (co-spend) clustering of addresses.

All input addresses of one transaction are assumed to be controlled by one
entity. Clusters are the connected components of the graph whose hyperedges
are the input-address sets of transactions. Coinbase transactions contribute
nothing, single-input transactions only register their address.

A cluster is identified by its representative, the lexicographically
smallest member address. Since address ids are assigned in lexicographic
order, this is also the smallest member id.
"""

from __future__ import absolute_import, print_function, division

import bisect
import csv
import time
from collections import namedtuple

import numba
import numpy as np

from ransomflow.conf import NUMBA_CACHE, I64DTYPE, InputError
from ransomflow.addrgraph import AddressGraph, aggregate_edges
from ransomflow.print_tools import print1, print_rate

#: one aggregated edge of the cluster graph; intra is True for flows between
#: distinct members of one cluster
ClusterEdge = namedtuple("ClusterEdge", ["src_cluster", "dst_cluster", "tx_count", "value_sat", "value_usd", "intra"])

@numba.njit(cache = NUMBA_CACHE)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    #path compression
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root

@numba.njit(cache = NUMBA_CACHE)
def _union_sets(parent, size, ptr, members):
    """Unions all members of each CSR row of `members`."""
    for t in range(len(ptr) - 1):
        start = ptr[t]
        stop = ptr[t+1]
        if stop - start < 2:
            continue
        a = _find(parent, members[start])
        for k in range(start + 1, stop):
            b = _find(parent, members[k])
            if a != b:
                #union by size
                if size[a] < size[b]:
                    a, b = b, a
                parent[b] = a
                size[a] += size[b]

@numba.njit(cache = NUMBA_CACHE)
def _representatives(parent):
    """Returns the smallest member id of each element's set."""
    n = len(parent)
    rep = np.full(n, -1, np.int64)
    labels = np.empty(n, np.int64)
    for i in range(n):
        root = _find(parent, i)
        if rep[root] == -1:
            rep[root] = i
        labels[i] = rep[root]
    return labels

def union_find_labels(n, ptr, members):
    """Computes connected component labels of `n` elements joined by sets.

    Parameters
    ----------
    n : int
        Number of elements.
    ptr, members : ndarray
        Sets in CSR form; all members of one row are joined.

    Returns
    -------
    labels : ndarray
        Smallest element id of each element's component.
    """
    parent = np.arange(n, dtype = I64DTYPE)
    size = np.ones(n, I64DTYPE)
    _union_sets(parent, size, np.asarray(ptr, I64DTYPE), np.asarray(members, I64DTYPE))
    return _representatives(parent)

class Partition(object):
    """Immutable clustering of addresses.

    Attributes
    ----------
    addresses : list of str
        Sorted addresses; positions are address ids.
    labels : ndarray
        Cluster representative id of each address.
    cluster_ids : ndarray
        Sorted representative ids, one per cluster.
    member_ptr, members : ndarray
        Members of each cluster in CSR form, in cluster_ids order, members
        sorted by id.
    """
    def __init__(self, addresses, labels):
        self.addresses = addresses
        self.labels = np.asarray(labels, I64DTYPE)
        self.members = np.argsort(self.labels, kind = "stable").astype(I64DTYPE)
        self.cluster_ids = np.unique(self.labels)
        self.member_ptr = np.searchsorted(self.labels[self.members],
                                          np.append(self.cluster_ids, len(addresses))).astype(I64DTYPE)
        for a in (self.labels, self.members, self.cluster_ids, self.member_ptr):
            a.setflags(write = False)

    @property
    def n_clusters(self):
        return len(self.cluster_ids)

    @property
    def n_addresses(self):
        return len(self.addresses)

    def __repr__(self):
        return "Partition: {0} addresses in {1} clusters".format(self.n_addresses, self.n_clusters)

    def address_id(self, address):
        i = bisect.bisect_left(self.addresses, address)
        if i < len(self.addresses) and self.addresses[i] == address:
            return i
        return -1

    def cluster_of(self, address):
        """Returns representative address of the address's cluster, or None."""
        i = self.address_id(address)
        if i < 0:
            return None
        return self.addresses[self.labels[i]]

    def cluster_index(self, rep_id):
        """Returns position of the cluster with representative id in cluster_ids."""
        return int(np.searchsorted(self.cluster_ids, rep_id))

    def member_ids(self, rep_id):
        """Returns member ids of the cluster with the given representative id."""
        k = self.cluster_index(rep_id)
        return self.members[self.member_ptr[k]:self.member_ptr[k+1]]

    def cluster_members(self, address):
        """Returns sorted member addresses of the cluster containing address."""
        i = self.address_id(address)
        if i < 0:
            return []
        return [self.addresses[j] for j in self.member_ids(self.labels[i])]

    def sizes(self):
        """Returns cluster sizes in cluster_ids order."""
        return np.diff(self.member_ptr)

    def clusters(self):
        """Iterates over member address lists of all clusters."""
        for k in range(self.n_clusters):
            yield [self.addresses[j] for j in self.members[self.member_ptr[k]:self.member_ptr[k+1]]]

def compute_partition(store):
    """Computes the co-spend partition of all ledger addresses.

    Parameters
    ----------
    store : LedgerStore
        Ingested ledger.

    Returns
    -------
    partition : Partition
        Clusters cover every address of the ledger. The result does not
        depend on transaction order.
    """
    t0 = time.time()
    print1("Computing co-spend partition")
    labels = union_find_labels(store.n_addresses, store.in_ptr, store.in_addr)
    partition = Partition(store.addresses, labels)
    print_rate(store.n_transactions, t0, message = "... clustered")
    print1("Computed {}".format(partition))
    return partition

class ClusterGraph(AddressGraph):
    """Aggregated cluster-level graph. Node ids are representative address ids."""
    edge_type = ClusterEdge

    @property
    def intra(self):
        """Boolean array, True for edges between members of the same cluster."""
        return self.src == self.dst

    def _edge(self, k):
        a = self.addresses
        return ClusterEdge(a[self.src[k]], a[self.dst[k]], int(self.tx_count[k]),
                           int(self.value_sat[k]), float(self.value_usd[k]), bool(self.src[k] == self.dst[k]))

def build_cluster_graph(partition, graph):
    """Aggregates an address graph to cluster granularity.

    Parameters
    ----------
    partition : Partition
        Co-spend partition.
    graph : AddressGraph
        Address graph of the same ledger.

    Returns
    -------
    graph : ClusterGraph
        Edge (cs, cd) aggregates all address edges (s, d) with s in cs and
        d in cd. Edges with cs == cd are intra-cluster flows.
    """
    if len(partition.addresses) != len(graph.addresses) or \
            (partition.addresses is not graph.addresses and partition.addresses != graph.addresses):
        raise InputError("Partition and address graph were built from different ledgers")
    src = partition.labels[graph.src]
    dst = partition.labels[graph.dst]
    out = aggregate_edges(src, dst, graph.tx_count, graph.value_sat, graph.value_usd)
    return ClusterGraph(partition.addresses, *out)

def merge_partitions(*partitions):
    """Merges partitions of ledger slices via shared addresses.

    The result equals the partition of the concatenated ledger.
    """
    if len(partitions) == 0:
        raise InputError("At least one partition is required")
    merged = sorted(set().union(*(p.addresses for p in partitions)))
    index = {a : i for i, a in enumerate(merged)}
    pairs = []
    for p in partitions:
        remap = np.fromiter((index[a] for a in p.addresses), I64DTYPE, count = len(p.addresses))
        pairs.append(np.stack((remap, remap[p.labels]), axis = 1))
    pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), I64DTYPE)
    ptr = np.arange(0, 2 * len(pairs) + 1, 2, dtype = I64DTYPE)
    labels = union_find_labels(len(merged), ptr, pairs.ravel())
    return Partition(merged, labels)

def write_partition(partition, file):
    """Writes the partition as CSV ``address,cluster_rep``."""
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "w", newline = "", encoding = "utf-8")
            own_fid = True
        else:
            f = file
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("address", "cluster_rep"))
        a = partition.addresses
        for i, label in enumerate(partition.labels):
            writer.writerow((a[i], a[label]))
    finally:
        if own_fid == True:
            f.close()
