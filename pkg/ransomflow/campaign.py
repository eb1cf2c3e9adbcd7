"""
Family seed sets, seed expansion through the partition and time filtering.

Seeds of a family are expanded to all members of the clusters they belong to.
The expanded set is then reduced to addresses first seen on or after the
family's campaign start month. Seeds themselves are never removed by the
time filter.
"""

from __future__ import absolute_import, print_function, division

import csv
import re
from collections import namedtuple, OrderedDict

import numpy as np

from ransomflow.conf import InputError, I64DTYPE, warning
from ransomflow.attribution import read_csv_rows
from ransomflow.print_tools import print1, print2

#: one labeled seed address
SeedRecord = namedtuple("SeedRecord", ["family", "address", "source"])

SEED_HEADER = ("family", "address", "source")

#: reason written to the drop report for seeds absent from the ledger
NOT_IN_LEDGER = "not in ledger"

_MONTH = re.compile(r"^(\d{4})-(\d{2})$")

def parse_month(value):
    """Parses a 'YYYY-MM' string and returns the first UTC second of that month.

    >>> parse_month("2016-02")
    1454284800
    """
    m = _MONTH.match(str(value).strip().strip('"').strip("'"))
    if m is None or not 1 <= int(m.group(2)) <= 12:
        raise InputError("Invalid month '{}', expected YYYY-MM".format(value))
    month = np.datetime64("{0}-{1}".format(m.group(1), m.group(2)), "M")
    return int(month.astype("datetime64[s]").astype(I64DTYPE))

def load_seeds(path):
    """Loads seed addresses from a CSV file with header ``family,address,source``.

    Returns
    -------
    seeds : OrderedDict
        Family name -> list of SeedRecord, deduplicated on (family, address),
        families sorted by name.
    """
    groups = {}
    seen = set()
    for lineno, row in read_csv_rows(path, SEED_HEADER):
        family, address = row["family"], row["address"]
        if family == "" or address == "":
            raise InputError("{0}: line {1}: empty family or address".format(path, lineno))
        if (family, address) in seen:
            continue
        seen.add((family, address))
        groups.setdefault(family, []).append(SeedRecord(family, address, row["source"]))
    print1("Loaded {0} seeds of {1} families from {2}".format(len(seen), len(groups), path))
    return OrderedDict(sorted(groups.items()))

class FamilyCampaign(object):
    """A labeled family and its address sets.

    Address sets are stored as sorted arrays of address ids of the ledger
    the campaign was expanded on.

    Attributes
    ----------
    family : str
        Family name.
    start_date : str or None
        Campaign start month 'YYYY-MM' (None if not filtered or unknown).
    seeds : ndarray
        Ids of seeds observed in the ledger.
    input_seeds : tuple of str
        All seed addresses given for the family.
    dropped : list of (address, reason)
        Seeds not observed in the ledger.
    expanded : ndarray
        Ids of members of clusters containing a seed.
    expanded_tf : ndarray
        Ids of time-filtered expanded addresses.
    clusters_touched : int
        Number of clusters containing a seed.
    empty : bool
        True if no seed survived.
    """
    def __init__(self, family, addresses, first_seen, input_seeds, seeds, dropped, expanded,
                 clusters_touched, start_date = None, expanded_tf = None):
        self.family = family
        self.addresses = addresses
        self.first_seen = first_seen
        self.input_seeds = tuple(input_seeds)
        self.seeds = np.asarray(seeds, I64DTYPE)
        self.dropped = list(dropped)
        self.expanded = np.asarray(expanded, I64DTYPE)
        self.clusters_touched = int(clusters_touched)
        self.start_date = start_date
        self.expanded_tf = self.expanded if expanded_tf is None else np.asarray(expanded_tf, I64DTYPE)
        for a in (self.seeds, self.expanded, self.expanded_tf):
            a.setflags(write = False)

    @property
    def empty(self):
        return len(self.seeds) == 0

    def __repr__(self):
        return "FamilyCampaign({0}): {1} seeds, {2} clusters, {3} expanded, {4} time-filtered".format(
            self.family, len(self.seeds), self.clusters_touched, len(self.expanded), len(self.expanded_tf))

    def _names(self, ids):
        return [self.addresses[i] for i in ids]

    @property
    def seed_addresses(self):
        return self._names(self.seeds)

    @property
    def expanded_addresses(self):
        return self._names(self.expanded)

    @property
    def expanded_tf_addresses(self):
        return self._names(self.expanded_tf)

    def copy(self, **kwargs):
        """Returns a copy with some attributes replaced."""
        args = dict(family = self.family, addresses = self.addresses, first_seen = self.first_seen,
                    input_seeds = self.input_seeds, seeds = self.seeds, dropped = self.dropped,
                    expanded = self.expanded, clusters_touched = self.clusters_touched,
                    start_date = self.start_date, expanded_tf = self.expanded_tf)
        args.update(kwargs)
        return FamilyCampaign(**args)

def _seed_addresses(seeds):
    out = []
    for s in seeds:
        out.append(s.address if isinstance(s, SeedRecord) else str(s))
    return list(OrderedDict.fromkeys(out))

def expand(seeds, partition, store, family = None):
    """Expands family seeds to the clusters that contain them.

    Parameters
    ----------
    seeds : list of SeedRecord or str
        Seeds of one family.
    partition : Partition
        Co-spend partition of the ledger.
    store : LedgerStore
        Ingested ledger.
    family : str, optional
        Family name. Taken from the seed records if not given.

    Returns
    -------
    campaign : FamilyCampaign
        Campaign without time filter (expanded_tf equals expanded). Seeds
        never observed in the ledger are listed in `dropped`.
    """
    if family is None:
        families = set(s.family for s in seeds if isinstance(s, SeedRecord))
        if len(families) != 1:
            raise InputError("Seeds must belong to exactly one family, got {}".format(sorted(families)))
        family = families.pop()
    addresses = _seed_addresses(seeds)
    ids = store.address_ids(addresses)
    dropped = [(a, NOT_IN_LEDGER) for a, i in zip(addresses, ids) if i < 0]
    surviving = np.unique(ids[ids >= 0])
    labels = np.unique(partition.labels[surviving])
    if len(labels):
        expanded = np.unique(np.concatenate([partition.member_ids(l) for l in labels]))
    else:
        expanded = np.zeros(0, I64DTYPE)
    campaign = FamilyCampaign(family, store.addresses, store.first_seen, addresses, surviving,
                              dropped, expanded, len(labels))
    if campaign.empty:
        warning("Family {} has no seeds in the ledger".format(family))
    elif dropped:
        print2("Family {0}: dropped {1} seeds not in the ledger".format(family, len(dropped)))
    print1("Expanded {}".format(campaign))
    return campaign

def time_filter(campaign, start_date):
    """Removes expanded addresses first seen before the campaign start month.

    Parameters
    ----------
    campaign : FamilyCampaign
        Expanded campaign.
    start_date : str or None
        Start month 'YYYY-MM'. If None, the filter is skipped with a warning.

    Returns
    -------
    campaign : FamilyCampaign
        New campaign with `expanded_tf` set. Seeds are always retained.
    """
    if start_date is None:
        warning("Family {} has no start date, time filter skipped".format(campaign.family))
        return campaign.copy(start_date = None, expanded_tf = campaign.expanded)
    cut = parse_month(start_date)
    expanded = campaign.expanded
    keep = (campaign.first_seen[expanded] >= cut) | np.isin(expanded, campaign.seeds)
    out = campaign.copy(start_date = str(start_date).strip().strip('"').strip("'"), expanded_tf = expanded[keep])
    print2("Time filtered {}".format(out))
    return out

def _open_writer(file):
    if isinstance(file, str):
        return open(file, "w", newline = "", encoding = "utf-8"), True
    return file, False

def write_expansion_table(campaigns, file):
    """Writes CSV ``family,seed_addr,clusters,exp_addr,exp_addr_tf``.

    Rows are sorted by exp_addr_tf descending, then by family.
    """
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "seed_addr", "clusters", "exp_addr", "exp_addr_tf"))
        for c in sorted(campaigns, key = lambda c: (-len(c.expanded_tf), c.family)):
            writer.writerow((c.family, len(c.seeds), c.clusters_touched, len(c.expanded), len(c.expanded_tf)))
    finally:
        if own_fid == True:
            f.close()

def write_drop_report(campaigns, file):
    """Writes dropped seeds as CSV ``family,address,reason``."""
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "address", "reason"))
        for c in sorted(campaigns, key = lambda c: c.family):
            for address, reason in sorted(c.dropped):
                writer.writerow((c.family, address, reason))
    finally:
        if own_fid == True:
            f.close()
