"""
Address tags and their propagation to clusters.

If one address of a cluster can be attributed to a known service, the whole
cluster is attributed to it. A cluster's tag set is the union of its
members' tags; conflicting labels are all retained.
"""

from __future__ import absolute_import, print_function, division

import csv
from collections import namedtuple

from ransomflow.conf import InputError, warning
from ransomflow.print_tools import print1

#: an external attribution of one address
Tag = namedtuple("Tag", ["address", "label", "category", "source"])

#: known tag categories; anything else is stored as 'other'
CATEGORIES = ("exchange", "gambling", "mixer", "other")

TAG_HEADER = ("address", "label", "category", "source")

def read_csv_rows(path, header):
    """Yields (line number, row dict) of a CSV file, checking the header.

    The file must contain at least the columns listed in `header`.
    """
    with open(path, "r", newline = "", encoding = "utf-8") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames
        if fields is None or any(h not in [x.strip() for x in fields] for h in header):
            raise InputError("{0}: missing header, expected '{1}'".format(path, ",".join(header)))
        for row in reader:
            row = {(k.strip() if k else k) : (v.strip() if isinstance(v, str) else "") for k, v in row.items()}
            if not any(row.get(h) for h in header):
                continue
            yield reader.line_num, row

def load_tags(path):
    """Loads tags from a CSV file with header ``address,label,category,source``.

    Duplicate (address, label) pairs are loaded once (the first row wins).
    Unknown categories are stored as 'other' and a warning is issued.

    Parameters
    ----------
    path : str
        Tag file name.

    Returns
    -------
    tags : list of Tag
        Tags in file order.
    """
    tags = []
    seen = set()
    unknown = {}
    for lineno, row in read_csv_rows(path, TAG_HEADER):
        address, label = row["address"], row["label"]
        if address == "" or label == "":
            raise InputError("{0}: line {1}: empty address or label".format(path, lineno))
        category = row["category"].lower()
        if category not in CATEGORIES:
            unknown.setdefault(row["category"], lineno)
            category = "other"
        if (address, label) in seen:
            continue
        seen.add((address, label))
        tags.append(Tag(address, label, category, row["source"]))
    for name, lineno in sorted(unknown.items(), key = lambda x: x[1]):
        warning("{0}: line {1}: unknown tag category '{2}' stored as 'other'".format(path, lineno, name))
    print1("Loaded {0} tags from {1}".format(len(tags), path))
    return tags

class ClusterAttribution(object):
    """Tags per cluster.

    Attributes
    ----------
    tags_by_cluster : dict
        Cluster representative address -> tuple of Tags, sorted by
        (label, address). Untagged clusters are absent.
    orphans : list of Tag
        Tags on addresses that do not occur in the ledger.
    """
    def __init__(self, tags_by_cluster, orphans):
        self.tags_by_cluster = tags_by_cluster
        self.orphans = orphans

    def __len__(self):
        return len(self.tags_by_cluster)

    def __repr__(self):
        return "ClusterAttribution: {0} tagged clusters, {1} orphans".format(len(self), len(self.orphans))

    def tags(self, cluster):
        """Returns tags of the cluster given by its representative address."""
        return self.tags_by_cluster.get(cluster, ())

    def labels(self, cluster):
        """Returns sorted distinct labels of the cluster."""
        return tuple(sorted(set(t.label for t in self.tags(cluster))))

    def categories(self, cluster):
        """Returns sorted distinct categories of the cluster."""
        return tuple(sorted(set(t.category for t in self.tags(cluster))))

def attribute_clusters(tags, partition):
    """Propagates address tags to their clusters.

    Parameters
    ----------
    tags : list of Tag
        Loaded tags.
    partition : Partition
        Co-spend partition.

    Returns
    -------
    attribution : ClusterAttribution
        Tag sets per cluster. Tags on unknown addresses are recorded as orphans.
    """
    grouped = {}
    orphans = []
    for tag in tags:
        cluster = partition.cluster_of(tag.address)
        if cluster is None:
            orphans.append(tag)
        else:
            grouped.setdefault(cluster, set()).add(tag)
    tags_by_cluster = {c : tuple(sorted(t, key = lambda x: (x.label, x.address, x.category, x.source)))
                       for c, t in grouped.items()}
    attribution = ClusterAttribution(tags_by_cluster, orphans)
    print1("Attributed {}".format(attribution))
    return attribution

def write_orphans(attribution, file):
    """Writes orphan tags as CSV ``address,label,reason``."""
    own_fid = False
    try:
        if isinstance(file, str):
            f = open(file, "w", newline = "", encoding = "utf-8")
            own_fid = True
        else:
            f = file
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("address", "label", "reason"))
        for tag in sorted(attribution.orphans, key = lambda x: (x.address, x.label)):
            writer.writerow((tag.address, tag.label, "address not in ledger"))
    finally:
        if own_fid == True:
            f.close()
