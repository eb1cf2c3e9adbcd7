"""
Address graph: aggregated directed value flows between addresses.

For each transaction every input address is connected to every output address
that is not one of the transaction's own input addresses (explicit change is
removed). Each output value is split among the inputs proportionally to input
values, every flow rounded half-even to a satoshi; the rounding residual of a
transaction goes to its lexicographically smallest output address. Flows
are aggregated over all transactions into one edge per (src, dst) pair, with a
transaction count, a satoshi sum and a USD estimate computed with the daily
closing rate of each contributing transaction.

Graph functions
---------------

* :func:`.build_address_graph` builds the graph from a ledger store.
* :func:`.attribute_flows` computes per-transaction flows (unaggregated).
* :func:`.split_flows` splits output values among inputs proportionally to input values.
* :func:`.out_neighbors` and :func:`.in_neighbors` query adjacency.
* :func:`.merge_graphs` merges graphs built on disjoint ledger slices.
* :func:`.write_edges` writes the edge dump CSV.
"""

from __future__ import absolute_import, print_function, division

import bisect
import csv
import time
from collections import namedtuple

import numpy as np

from ransomflow.conf import I64DTYPE, F64DTYPE, DAY, COIN, InputError
from ransomflow.print_tools import print1, print_rate

#: one aggregated edge of the address graph
AddressEdge = namedtuple("AddressEdge", ["src", "dst", "tx_count", "value_sat", "value_usd"])

def _freeze(*arrays):
    for a in arrays:
        a.setflags(write = False)

def _csr_pointer(ids, n):
    """Builds CSR row pointer from sorted row ids."""
    ptr = np.zeros(n + 1, I64DTYPE)
    np.cumsum(np.bincount(ids, minlength = n), out = ptr[1:])
    return ptr

def aggregate_edges(src, dst, count, value_sat, value_usd):
    """Aggregates edge arrays over identical (src, dst) pairs.

    Returns aggregated (src, dst, count, value_sat, value_usd) arrays sorted
    by (src, dst). Summation order is the input order within each pair,
    so results are deterministic for deterministic input.
    """
    src = np.asarray(src, I64DTYPE)
    dst = np.asarray(dst, I64DTYPE)
    if len(src) == 0:
        z = np.zeros(0, I64DTYPE)
        return z, z.copy(), z.copy(), z.copy(), np.zeros(0, F64DTYPE)
    order = np.lexsort((np.arange(len(src)), dst, src))
    src, dst = src[order], dst[order]
    start = np.ones(len(src), bool)
    start[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    index = np.nonzero(start)[0]
    return (src[index], dst[index],
            np.add.reduceat(np.asarray(count, I64DTYPE)[order], index),
            np.add.reduceat(np.asarray(value_sat, I64DTYPE)[order], index),
            np.add.reduceat(np.asarray(value_usd, F64DTYPE)[order], index))

class AddressGraph(object):
    """Immutable aggregated address graph.

    Edges are stored sorted by (src, dst) with a CSR out-index; a second
    permutation provides the in-index sorted by (dst, src). Node ids refer to
    the `addresses` list (lexicographically sorted).
    """
    edge_type = AddressEdge

    def __init__(self, addresses, src, dst, tx_count, value_sat, value_usd):
        self.addresses = addresses
        self.src = np.asarray(src, I64DTYPE)
        self.dst = np.asarray(dst, I64DTYPE)
        self.tx_count = np.asarray(tx_count, I64DTYPE)
        self.value_sat = np.asarray(value_sat, I64DTYPE)
        self.value_usd = np.asarray(value_usd, F64DTYPE)
        n = len(addresses)
        self.out_ptr = _csr_pointer(self.src, n)
        self.in_order = np.lexsort((self.src, self.dst)).astype(I64DTYPE)
        self.in_ptr = _csr_pointer(self.dst, n)
        _freeze(self.src, self.dst, self.tx_count, self.value_sat, self.value_usd,
                self.out_ptr, self.in_order, self.in_ptr)

    @property
    def n_edges(self):
        return len(self.src)

    @property
    def n_nodes(self):
        return len(self.addresses)

    def __len__(self):
        return self.n_edges

    def __repr__(self):
        return "{0}: {1} nodes, {2} edges".format(self.__class__.__name__, self.n_nodes, self.n_edges)

    def _edge(self, k):
        a = self.addresses
        return self.edge_type(a[self.src[k]], a[self.dst[k]], int(self.tx_count[k]),
                              int(self.value_sat[k]), float(self.value_usd[k]))

    def node_id(self, address):
        """Returns node id of the address or -1."""
        i = bisect.bisect_left(self.addresses, address)
        if i < len(self.addresses) and self.addresses[i] == address:
            return i
        return -1

    def edges(self):
        """Iterates over all edges in (src, dst) order."""
        for k in range(self.n_edges):
            yield self._edge(k)

    def out_edge_range(self, i):
        """Returns (start, stop) of the out-edges of node id `i`."""
        return int(self.out_ptr[i]), int(self.out_ptr[i+1])

    def out_neighbors(self, address):
        i = self.node_id(address)
        if i < 0:
            return []
        start, stop = self.out_edge_range(i)
        return [(self.addresses[self.dst[k]], self._edge(k)) for k in range(start, stop)]

    def in_neighbors(self, address):
        i = self.node_id(address)
        if i < 0:
            return []
        ks = self.in_order[self.in_ptr[i]:self.in_ptr[i+1]]
        return [(self.addresses[self.src[k]], self._edge(k)) for k in ks]

    def totals(self):
        """Returns (tx_count, value_sat, value_usd) sums over all edges."""
        return int(self.tx_count.sum()), int(self.value_sat.sum()), float(self.value_usd.sum())

def round_half_even(num, den):
    """Returns num / den rounded to the nearest integer, ties to even.

    >>> round_half_even(1, 2), round_half_even(3, 2), round_half_even(5, 3)
    (0, 2, 2)
    """
    q, r = divmod(int(num), int(den))
    if 2 * r > den or (2 * r == den and q % 2 == 1):
        q += 1
    return q

def split_flows(values, weights):
    """Splits output values among inputs proportionally to input weights.

    Each flow ``values[o] * weights[i] / sum(weights)`` is rounded half-even
    to an integer. The residual (output total minus the sum of rounded flows)
    goes to the first output, which is the lexicographically smallest output
    address: a positive residual is added to its flow from the first input, a
    negative one is taken from its flows in input order without going below
    zero, continuing with the next outputs if needed. Flows of a transaction
    thus sum to its output total.

    Parameters
    ----------
    values : list of int
        Output values, in output address order.
    weights : list of int
        Input values, in input address order.

    Returns
    -------
    flows : list of lists
        flows[o][i] is the value attributed from input i to output o.

    Examples
    --------
    >>> split_flows([4], [1, 3])
    [[1, 3]]
    >>> split_flows([1, 1], [1, 1])
    [[2, 0], [0, 0]]
    """
    values = [int(v) for v in values]
    weights = [int(w) for w in weights]
    total = sum(weights)
    if total == 0:
        #outputs never exceed inputs, so there is nothing to split but the residual
        flows = [[0] * len(weights) for v in values]
    else:
        flows = [[round_half_even(v * w, total) for w in weights] for v in values]
    residual = sum(values) - sum(sum(row) for row in flows)
    if residual > 0:
        flows[0][0] += residual
    else:
        for row in flows:
            for i in range(len(row)):
                if residual == 0:
                    return flows
                take = min(row[i], -residual)
                row[i] -= take
                residual += take
    return flows

def merge_slots(ptr, addr, value):
    """Merges slots of the same address within one transaction.

    Returns (tx, addr, value) arrays sorted by (tx, addr) with summed values.
    """
    ntx = len(ptr) - 1
    tx = np.repeat(np.arange(ntx, dtype = I64DTYPE), np.diff(ptr))
    if len(tx) == 0:
        z = np.zeros(0, I64DTYPE)
        return z, z.copy(), z.copy()
    order = np.lexsort((addr, tx))
    tx, addr, value = tx[order], addr[order], value[order]
    start = np.ones(len(tx), bool)
    start[1:] = (tx[1:] != tx[:-1]) | (addr[1:] != addr[:-1])
    index = np.nonzero(start)[0]
    return tx[index], addr[index], np.add.reduceat(value, index)

def attribute_flows(store):
    """Computes per-transaction attributed flows of a ledger.

    Parameters
    ----------
    store : LedgerStore
        Ingested ledger.

    Returns
    -------
    tx, src, dst, value_sat : ndarray
        One row per (transaction, input address, output address) triplet,
        after merging duplicate slots and removing explicit change outputs.
        Flows of one transaction sum to its non-change output total.
    """
    n = store.n_addresses
    in_tx, in_addr, in_value = merge_slots(store.in_ptr, store.in_addr, store.in_value)
    out_tx, out_addr, out_value = merge_slots(store.out_ptr, store.out_addr, store.out_value)

    #explicit change: output address is one of the transaction's inputs
    in_key = in_tx * n + in_addr
    out_key = out_tx * n + out_addr
    mask = ~np.isin(out_key, in_key)
    #coinbase outputs have no source
    n_inputs = np.bincount(in_tx, minlength = store.n_transactions)
    mask &= n_inputs[out_tx] > 0
    out_tx, out_addr, out_value = out_tx[mask], out_addr[mask], out_value[mask]

    in_ptr = _csr_pointer(in_tx, store.n_transactions)

    #single input transactions: the whole output goes to the only input
    single = n_inputs[out_tx] == 1
    s_tx = out_tx[single]
    s_src = in_addr[in_ptr[s_tx]]
    s_dst = out_addr[single]
    s_val = out_value[single]

    #multiple input transactions: proportional attribution
    m_tx, m_src, m_dst, m_val = [], [], [], []
    multi = np.nonzero(~single)[0]
    if len(multi):
        out_ptr = _csr_pointer(out_tx[multi], store.n_transactions)
        for t in np.unique(out_tx[multi]):
            srcs = in_addr[in_ptr[t]:in_ptr[t+1]].tolist()
            weights = in_value[in_ptr[t]:in_ptr[t+1]].tolist()
            outs = multi[out_ptr[t]:out_ptr[t+1]]
            flows = split_flows(out_value[outs].tolist(), weights)
            for k, row in zip(outs, flows):
                m_tx.extend([t] * len(srcs))
                m_src.extend(srcs)
                m_dst.extend([out_addr[k]] * len(srcs))
                m_val.extend(row)
    tx = np.concatenate((s_tx, np.asarray(m_tx, I64DTYPE)))
    src = np.concatenate((s_src, np.asarray(m_src, I64DTYPE)))
    dst = np.concatenate((s_dst, np.asarray(m_dst, I64DTYPE)))
    value = np.concatenate((s_val, np.asarray(m_val, I64DTYPE)))
    order = np.lexsort((dst, src, tx))
    return tx[order], src[order], dst[order], value[order]

def build_address_graph(store, rates):
    """Builds the aggregated address graph of a ledger.

    Parameters
    ----------
    store : LedgerStore
        Ingested ledger.
    rates : RateTable
        Daily BTC/USD closing prices covering every date on which a
        transaction produces a flow.

    Returns
    -------
    graph : AddressGraph
        Aggregated graph without self-loops.

    Raises
    ------
    MissingRateError
        If a transaction date has no rate. The error names the first such date.
    """
    t0 = time.time()
    print1("Building address graph")
    tx, src, dst, value = attribute_flows(store)
    days = store.time[tx] // DAY
    close = rates.close_for_days(days)
    usd = value.astype(F64DTYPE) * close / COIN
    src, dst, count, sat, usd = aggregate_edges(src, dst, np.ones(len(src), I64DTYPE), value, usd)
    graph = AddressGraph(store.addresses, src, dst, count, sat, usd)
    print_rate(store.n_transactions, t0, message = "... attributed")
    print1("Built {}".format(graph))
    return graph

def out_neighbors(graph, address):
    """Returns a list of (dst, edge) pairs for the address, sorted by dst.

    Parameters
    ----------
    graph : AddressGraph
        Built address graph.
    address : str
        Source address.
    """
    return graph.out_neighbors(address)

def in_neighbors(graph, address):
    """Returns a list of (src, edge) pairs of the address, sorted by src."""
    return graph.in_neighbors(address)

def _remap(addresses, merged):
    index = {a : i for i, a in enumerate(merged)}
    return np.fromiter((index[a] for a in addresses), I64DTYPE, count = len(addresses))

def merge_graphs(*graphs):
    """Merges address graphs built from disjoint sets of transactions.

    Node spaces are joined by address string; edge attributes are summed.
    The result equals the graph built from the union of the transactions
    (USD values up to floating point summation order).
    """
    if len(graphs) == 0:
        raise InputError("At least one graph is required")
    merged = sorted(set().union(*(g.addresses for g in graphs)))
    srcs, dsts, counts, sats, usds = [], [], [], [], []
    for g in graphs:
        remap = _remap(g.addresses, merged)
        srcs.append(remap[g.src])
        dsts.append(remap[g.dst])
        counts.append(g.tx_count)
        sats.append(g.value_sat)
        usds.append(g.value_usd)
    out = aggregate_edges(np.concatenate(srcs), np.concatenate(dsts), np.concatenate(counts),
                          np.concatenate(sats), np.concatenate(usds))
    return graphs[0].__class__(merged, *out)

def write_edges(graph, file):
    """Writes edges as CSV ``src,dst,tx_count,value_sat,value_usd``.

    USD values are written with two decimals.
    """
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "w", newline = "", encoding = "utf-8")
            own_fid = True
        else:
            f = file
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("src", "dst", "tx_count", "value_sat", "value_usd"))
        a = graph.addresses
        for s, d, c, v, u in zip(graph.src, graph.dst, graph.tx_count, graph.value_sat, graph.value_usd):
            writer.writerow((a[s], a[d], c, v, "{:.2f}".format(u)))
    finally:
        if own_fid == True:
            f.close()
