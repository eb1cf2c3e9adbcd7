"""Ransomware payment flow analysis of a normalized blockchain ledger
"""

__version__ = "0.1.0.dev"

import ransomflow.conf
from .ledger import ingest, first_seen, LedgerStore, Transaction, TxSlot
from .addrgraph import build_address_graph, out_neighbors, AddressGraph, AddressEdge
from .cluster import compute_partition, build_cluster_graph, Partition
from .attribution import load_tags, attribute_clusters, Tag
from .campaign import load_seeds, expand, time_filter, FamilyCampaign, SeedRecord
from .flows import build_outrel, key_addresses, indegree_stats, exit_points, cross_family_links, KeyAddress
from .econ import load_rates, payment_set, family_impact, mean_payment, cumulative_series, \
    market_summary, RateTable, PaymentRecord
from .testbed import generate, evaluate
