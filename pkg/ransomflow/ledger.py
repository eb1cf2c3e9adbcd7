"""
Normalized transaction ledger: parsing, validation and indexing.

The ledger file holds one JSON object per line::

    {"txid": "<64 hex>", "height": 1, "time": 1454284800,
     "inputs": [{"addr": "A", "value": 200000000}],
     "outputs": [{"addr": "B", "value": 150000000}, {"addr": "A", "value": 49990000}]}

Values are integer satoshi. Coinbase transactions have ``"inputs": []``.

Ledger functions
----------------

* :func:`.ingest` reads, validates and indexes a ledger file.
* :func:`.first_seen` returns the first-seen timestamp of an address.
* :func:`.dump_index` writes the per-address incidence index.
* :func:`.incidences` iterates over all (address, txid, role) incidences.
* :func:`.summary` computes ledger statistics.
* :func:`.save_store` saves a store to a binary file.
* :func:`.load_store` loads a store from a binary file.
"""

from __future__ import absolute_import, print_function, division

import bisect
import csv
import json
import re
import time
from collections import namedtuple

import numpy as np

from ransomflow.conf import InputError, InvariantError, I64DTYPE
from ransomflow.print_tools import print1, print_rate

#: one normalized ledger entry
Transaction = namedtuple("Transaction", ["txid", "height", "timestamp", "inputs", "outputs"])
#: an input or an output of a transaction, value in satoshi
TxSlot = namedtuple("TxSlot", ["address", "value"])

#: role codes in the occurrence index
INPUT = 0
OUTPUT = 1
ROLES = ("input", "output")

#: largest slot value accepted (values are stored as int64)
MAX_VALUE = 2**63 - 1

#: max number of problems listed in a single error message
MAX_REPORTED = 20

MAGIC = b"rfls"
VERSION = b"\x02"

_TXID = re.compile(r"[0-9a-f]{64}")

def _freeze(*arrays):
    for a in arrays:
        a.setflags(write = False)

def _gather_ranges(ptr, order):
    """Returns indices that reorder CSR rows given by `ptr` into `order`."""
    lengths = np.diff(ptr)[order]
    starts = ptr[:-1][order]
    newptr = np.zeros(len(order) + 1, I64DTYPE)
    np.cumsum(lengths, out = newptr[1:])
    index = np.repeat(starts - newptr[:-1], lengths) + np.arange(newptr[-1], dtype = I64DTYPE)
    return index, newptr

class LedgerStore(object):
    """Immutable, fully indexed ledger.

    Transactions are stored in columnar (CSR) form, sorted by (height, txid).
    Addresses are interned to integer ids in lexicographic order, so id order
    equals address order.

    Attributes
    ----------
    txids : list of str
        Transaction ids in ledger order.
    height, time : ndarray
        Block height and UTC timestamp per transaction.
    in_ptr, in_addr, in_value : ndarray
        Input slots in CSR form (``in_ptr`` has length n_transactions + 1).
    out_ptr, out_addr, out_value : ndarray
        Output slots in CSR form.
    addresses : list of str
        Sorted list of all addresses.
    occ_ptr, occ_tx, occ_role : ndarray
        Per-address occurrence index in CSR form, sorted by (address, tx, role).
    first_seen : ndarray
        First-seen timestamp per address id.
    """
    def __init__(self, txids, height, time, in_ptr, in_addr, in_value,
                 out_ptr, out_addr, out_value, addresses):
        self.txids = list(txids)
        self.height = np.asarray(height, I64DTYPE)
        self.time = np.asarray(time, I64DTYPE)
        self.in_ptr = np.asarray(in_ptr, I64DTYPE)
        self.in_addr = np.asarray(in_addr, I64DTYPE)
        self.in_value = np.asarray(in_value, I64DTYPE)
        self.out_ptr = np.asarray(out_ptr, I64DTYPE)
        self.out_addr = np.asarray(out_addr, I64DTYPE)
        self.out_value = np.asarray(out_value, I64DTYPE)
        self.addresses = list(addresses)
        self._build_index()
        _freeze(self.height, self.time, self.in_ptr, self.in_addr, self.in_value,
                self.out_ptr, self.out_addr, self.out_value,
                self.occ_ptr, self.occ_tx, self.occ_role, self.first_seen)

    def _build_index(self):
        ntx = self.n_transactions
        in_tx = np.repeat(np.arange(ntx, dtype = I64DTYPE), np.diff(self.in_ptr))
        out_tx = np.repeat(np.arange(ntx, dtype = I64DTYPE), np.diff(self.out_ptr))
        addr = np.concatenate((self.in_addr, self.out_addr))
        tx = np.concatenate((in_tx, out_tx))
        role = np.concatenate((np.full(len(in_tx), INPUT, I64DTYPE), np.full(len(out_tx), OUTPUT, I64DTYPE)))
        order = np.lexsort((role, tx, addr))
        addr, tx, role = addr[order], tx[order], role[order]
        #same address in several slots of one role is a single occurrence
        if len(addr) > 0:
            keep = np.ones(len(addr), bool)
            keep[1:] = (addr[1:] != addr[:-1]) | (tx[1:] != tx[:-1]) | (role[1:] != role[:-1])
            addr, tx, role = addr[keep], tx[keep], role[keep]
        counts = np.bincount(addr, minlength = self.n_addresses)
        self.occ_ptr = np.zeros(self.n_addresses + 1, I64DTYPE)
        np.cumsum(counts, out = self.occ_ptr[1:])
        self.occ_tx = tx
        self.occ_role = role
        if self.n_addresses > 0:
            self.first_seen = np.minimum.reduceat(self.time[tx], self.occ_ptr[:-1])
        else:
            self.first_seen = np.zeros(0, I64DTYPE)

    @property
    def n_transactions(self):
        return len(self.txids)

    @property
    def n_addresses(self):
        return len(self.addresses)

    def __len__(self):
        return self.n_transactions

    def __repr__(self):
        return "LedgerStore: {0} transactions, {1} addresses".format(self.n_transactions, self.n_addresses)

    def address_id(self, address):
        """Returns integer id of the address, or -1 if address is not in the ledger."""
        i = bisect.bisect_left(self.addresses, address)
        if i < len(self.addresses) and self.addresses[i] == address:
            return i
        return -1

    def address_ids(self, addresses):
        """Returns an array of ids for a sequence of addresses (-1 for unknown ones)."""
        return np.fromiter((self.address_id(a) for a in addresses), I64DTYPE, count = len(addresses))

    def transaction(self, i):
        """Reconstructs the :class:`Transaction` at ledger index `i`."""
        a = self.addresses
        inputs = [TxSlot(a[j], int(v)) for j, v in zip(self.in_addr[self.in_ptr[i]:self.in_ptr[i+1]],
                                                       self.in_value[self.in_ptr[i]:self.in_ptr[i+1]])]
        outputs = [TxSlot(a[j], int(v)) for j, v in zip(self.out_addr[self.out_ptr[i]:self.out_ptr[i+1]],
                                                        self.out_value[self.out_ptr[i]:self.out_ptr[i+1]])]
        return Transaction(self.txids[i], int(self.height[i]), int(self.time[i]), inputs, outputs)

    def transactions(self):
        """Iterates over all transactions in ledger order."""
        for i in range(self.n_transactions):
            yield self.transaction(i)

    def occurrences(self, address):
        """Returns a list of (txid, role) occurrences of the address."""
        i = self.address_id(address)
        if i < 0:
            return []
        start, stop = self.occ_ptr[i], self.occ_ptr[i+1]
        return [(self.txids[t], ROLES[r]) for t, r in zip(self.occ_tx[start:stop], self.occ_role[start:stop])]

    def is_coinbase(self):
        """Returns a boolean array, True for coinbase transactions."""
        return np.diff(self.in_ptr) == 0

    def fees(self):
        """Returns fee per transaction (zero for coinbase transactions)."""
        ntx = self.n_transactions
        tin = np.zeros(ntx, I64DTYPE)
        tout = np.zeros(ntx, I64DTYPE)
        if len(self.in_value):
            np.add.at(tin, np.repeat(np.arange(ntx), np.diff(self.in_ptr)), self.in_value)
        if len(self.out_value):
            np.add.at(tout, np.repeat(np.arange(ntx), np.diff(self.out_ptr)), self.out_value)
        fee = tin - tout
        fee[self.is_coinbase()] = 0
        return fee

def _check_int(value, name, lineno, errors, minimum = 0, maximum = MAX_VALUE):
    if isinstance(value, bool) or not isinstance(value, int):
        errors.append("line {0}: '{1}' must be an integer".format(lineno, name))
        return False
    if value < minimum:
        errors.append("line {0}: negative {1} ({2})".format(lineno, name, value))
        return False
    if value > maximum:
        errors.append("line {0}: {1} {2} exceeds 64-bit range".format(lineno, name, value))
        return False
    return True

def _parse_slots(record, key, lineno, errors):
    slots = record.get(key)
    if not isinstance(slots, list):
        errors.append("line {0}: '{1}' must be an array".format(lineno, key))
        return None
    out = []
    for k, slot in enumerate(slots):
        if not isinstance(slot, dict):
            errors.append("line {0}: {1}[{2}] must be an object".format(lineno, key, k))
            return None
        addr = slot.get("addr")
        value = slot.get("value")
        if not isinstance(addr, str) or addr == "":
            errors.append("line {0}: empty address in {1}[{2}]".format(lineno, key, k))
            return None
        if not _check_int(value, "value", lineno, errors):
            return None
        out.append((addr, value))
    return out

def _parse_line(line, lineno, errors):
    """Parses one ledger line. Returns a tuple or None on error (errors are appended)."""
    try:
        record = json.loads(line)
    except ValueError as e:
        errors.append("line {0}: malformed JSON ({1})".format(lineno, e))
        return None
    if not isinstance(record, dict):
        errors.append("line {0}: record must be a JSON object".format(lineno))
        return None
    txid = record.get("txid")
    if not isinstance(txid, str) or not _TXID.fullmatch(txid):
        errors.append("line {0}: txid must be a 64-char lowercase hex string".format(lineno))
        return None
    ok = _check_int(record.get("height"), "height", lineno, errors)
    ok = _check_int(record.get("time"), "time", lineno, errors) and ok
    if not ok:
        return None
    inputs = _parse_slots(record, "inputs", lineno, errors)
    outputs = _parse_slots(record, "outputs", lineno, errors)
    if inputs is None or outputs is None:
        return None
    if len(outputs) == 0:
        errors.append("line {0}: transaction {1} has no outputs".format(lineno, txid))
        return None
    return txid, record["height"], record["time"], inputs, outputs

def _raise_errors(errors, exception, path):
    n = len(errors)
    shown = errors[:MAX_REPORTED]
    more = "" if n <= MAX_REPORTED else "\n... and {} more".format(n - MAX_REPORTED)
    raise exception("{0}: {1} problem(s)\n{2}{3}".format(path, n, "\n".join(shown), more))

def ingest(path, format = "jsonl"):
    """Reads, validates and indexes a ledger file.

    Parameters
    ----------
    path : str
        Ledger file name.
    format : str
        File format. Only 'jsonl' (one JSON transaction record per line) is
        supported.

    Returns
    -------
    store : LedgerStore
        A fully indexed, immutable ledger store with transactions sorted by
        (height, txid).

    Raises
    ------
    InputError
        On malformed lines, duplicate txids, negative values or empty
        addresses. The message lists line numbers.
    InvariantError
        If a non-coinbase transaction spends more than its inputs, or if
        timestamps decrease in height order.
    """
    if format != "jsonl":
        raise ValueError("Unsupported ledger format '{}'".format(format))
    t0 = time.time()
    print1("Ingesting ledger {}".format(path))

    errors = []
    lines = {}
    txids, heights, times = [], [], []
    in_counts, out_counts = [], []
    in_addr, in_value, out_addr, out_value = [], [], [], []
    intern = {}

    with open(path, "r", encoding = "utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parsed = _parse_line(line, lineno, errors)
            if parsed is None:
                continue
            txid, height, timestamp, inputs, outputs = parsed
            if txid in lines:
                errors.append("line {0}: duplicate txid {1} (first seen on line {2})".format(lineno, txid, lines[txid]))
                continue
            lines[txid] = lineno
            txids.append(txid)
            heights.append(height)
            times.append(timestamp)
            in_counts.append(len(inputs))
            out_counts.append(len(outputs))
            for addr, value in inputs:
                in_addr.append(intern.setdefault(addr, len(intern)))
                in_value.append(value)
            for addr, value in outputs:
                out_addr.append(intern.setdefault(addr, len(intern)))
                out_value.append(value)

    if errors:
        _raise_errors(errors, InputError, path)

    #fee check per transaction
    in_ptr = np.zeros(len(txids) + 1, I64DTYPE)
    np.cumsum(in_counts, out = in_ptr[1:])
    out_ptr = np.zeros(len(txids) + 1, I64DTYPE)
    np.cumsum(out_counts, out = out_ptr[1:])
    in_value = np.asarray(in_value, I64DTYPE)
    out_value = np.asarray(out_value, I64DTYPE)
    tin = _segment_sums(in_value, in_ptr)
    tout = _segment_sums(out_value, out_ptr)
    bad = np.nonzero((np.diff(in_ptr) > 0) & (tout > tin))[0]
    if len(bad):
        _raise_errors(["line {0}: transaction {1} spends {2} sat but has only {3} sat of inputs".format(
            lines[txids[i]], txids[i], tout[i], tin[i]) for i in bad], InvariantError, path)

    #deterministic address ids: lexicographic order
    unique = sorted(intern)
    remap = np.empty(len(unique), I64DTYPE)
    temp = np.fromiter(intern.values(), I64DTYPE, count = len(intern))
    rank = {a : i for i, a in enumerate(unique)}
    remap[temp] = np.fromiter((rank[a] for a in intern.keys()), I64DTYPE, count = len(intern))
    del rank
    in_addr = remap[np.asarray(in_addr, I64DTYPE)] if in_addr else np.zeros(0, I64DTYPE)
    out_addr = remap[np.asarray(out_addr, I64DTYPE)] if out_addr else np.zeros(0, I64DTYPE)

    #deterministic transaction order: (height, txid)
    order = np.asarray(sorted(range(len(txids)), key = lambda i: (heights[i], txids[i])), I64DTYPE)
    heights = np.asarray(heights, I64DTYPE)[order] if len(order) else np.zeros(0, I64DTYPE)
    times = np.asarray(times, I64DTYPE)[order] if len(order) else np.zeros(0, I64DTYPE)
    in_index, new_in_ptr = _gather_ranges(in_ptr, order)
    out_index, new_out_ptr = _gather_ranges(out_ptr, order)
    txids = [txids[i] for i in order]

    decreasing = np.nonzero(np.diff(times) < 0)[0]
    if len(decreasing):
        _raise_errors(["transaction {0} (height {1}) has timestamp {2} earlier than its predecessor {3}".format(
            txids[i+1], heights[i+1], times[i+1], times[i]) for i in decreasing], InvariantError, path)

    store = LedgerStore(txids, heights, times, new_in_ptr, in_addr[in_index], in_value[in_index],
                        new_out_ptr, out_addr[out_index], out_value[out_index], unique)
    print_rate(store.n_transactions, t0, message = "... ingested")
    print1("Ingested {}".format(store))
    return store

def _segment_sums(values, ptr):
    """Sums values per CSR row (empty rows give zero)."""
    csum = np.zeros(len(values) + 1, I64DTYPE)
    np.cumsum(values, out = csum[1:])
    return csum[ptr[1:]] - csum[ptr[:-1]]

def first_seen(store, address):
    """Returns first-seen timestamp (UTC seconds) of the address, or None.

    Parameters
    ----------
    store : LedgerStore
        Ingested ledger.
    address : str
        Address to look up.

    Returns
    -------
    timestamp : int or None
        Minimum timestamp over all transactions the address occurs in, or
        None if the address occurs in no transaction.
    """
    i = store.address_id(address)
    if i < 0:
        return None
    return int(store.first_seen[i])

def incidences(store):
    """Iterates over (address, txid, role) triplets of the address index in
    deterministic (address, ledger order, role) order."""
    a = store.addresses
    for i in range(store.n_addresses):
        for k in range(store.occ_ptr[i], store.occ_ptr[i+1]):
            yield a[i], store.txids[store.occ_tx[k]], ROLES[store.occ_role[k]]

def dump_index(store, file):
    """Writes the per-address incidence index as CSV ``address,txid,role``.

    Parameters
    ----------
    store : LedgerStore
        Ingested ledger.
    file : str or file
        Output file name or an open text file.
    """
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "w", newline = "", encoding = "utf-8")
            own_fid = True
        else:
            f = file
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("address", "txid", "role"))
        writer.writerows(incidences(store))
    finally:
        if own_fid == True:
            f.close()

def summary(store):
    """Returns a dict with ledger statistics."""
    coinbase = store.is_coinbase()
    return {"transactions" : store.n_transactions,
            "addresses" : store.n_addresses,
            "coinbase" : int(coinbase.sum()),
            "fees_sat" : int(store.fees().sum()),
            "first_time" : int(store.time[0]) if store.n_transactions else None,
            "last_time" : int(store.time[-1]) if store.n_transactions else None,
            "first_height" : int(store.height[0]) if store.n_transactions else None,
            "last_height" : int(store.height[-1]) if store.n_transactions else None}

def _strings2arrays(strings):
    """Encodes strings as (byte lengths, concatenated utf-8 bytes)."""
    encoded = [s.encode("utf-8") for s in strings]
    lengths = np.fromiter((len(e) for e in encoded), I64DTYPE, count = len(encoded))
    return lengths, np.frombuffer(b"".join(encoded), np.uint8)

def _arrays2strings(lengths, data, n):
    if len(lengths) != n or int(np.sum(lengths)) != len(data):
        raise OSError("Corrupted string table in ledger store file")
    buf = data.tobytes()
    ends = np.cumsum(lengths).tolist()
    starts = [0] + ends[:-1]
    return [buf[s:e].decode("utf-8") for s, e in zip(starts, ends)]

def save_store(file, store):
    """Saves ledger store to a binary file.

    Parameters
    ----------
    file : file, str
        File or filename to which the data is saved.
    store : LedgerStore
        Store to save.
    """
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "wb")
            own_fid = True
        else:
            f = file
        f.write(MAGIC)
        f.write(VERSION)
        np.save(f, np.array([store.n_transactions, store.n_addresses], I64DTYPE), allow_pickle = False)
        for strings in (store.txids, store.addresses):
            for a in _strings2arrays(strings):
                np.save(f, a, allow_pickle = False)
        for a in (store.height, store.time, store.in_ptr, store.in_addr, store.in_value,
                  store.out_ptr, store.out_addr, store.out_value):
            np.save(f, a, allow_pickle = False)
    finally:
        if own_fid == True:
            f.close()

def load_store(file):
    """Loads ledger store from a file written by :func:`save_store`.

    Parameters
    ----------
    file : file, str
        The file to read.
    """
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "rb")
            own_fid = True
        else:
            f = file
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise OSError("Failed to interpret file {}".format(file))
        version = f.read(1)
        if ord(version) > ord(VERSION):
            raise OSError("This file was created with a more recent version of ransomflow.")
        elif ord(version) < ord(VERSION):
            raise OSError("This file was created with an older version of ransomflow.")
        ntx, naddr = np.load(f)
        txids = _arrays2strings(np.load(f), np.load(f), ntx)
        addresses = _arrays2strings(np.load(f), np.load(f), naddr)
        arrays = [np.load(f) for i in range(8)]
        return LedgerStore(txids, arrays[0], arrays[1], *arrays[2:], addresses = addresses)
    finally:
        if own_fid == True:
            f.close()
