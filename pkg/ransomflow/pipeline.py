"""
Main top level analysis functions.

:func:`analyze` runs the pipeline stages in order (ingest, cluster, expand,
flows, econ) and returns an :class:`Analysis`. :func:`write_reports` writes
all report files of the stages that were run.

The ingested store, the partition and the address graph are cached in
``<output>/.cache`` under names derived from content hashes of their inputs.
Per-family analysis runs on a thread pool; results are always collected in
family order so reports do not depend on scheduling.
"""

from __future__ import absolute_import, print_function, division

import csv
import json
import os
import re
import time
from collections import OrderedDict
from multiprocessing.pool import ThreadPool

import numpy as np

from ransomflow.conf import get_default_config_option, InputError
from ransomflow.hashing import hash_files
from ransomflow.print_tools import print1, print2, print_progress
from ransomflow import ledger, addrgraph, cluster, attribution, campaign, flows, econ
from ransomflow.testbed import FamilyResult

#: pipeline stages in execution order
STAGES = ("ingest", "cluster", "expand", "flows", "econ", "report")

#: version of cached stage files, bump when formats change
CACHE_VERSION = 2

#: masked tail summary: number of top families excluded and the USD threshold
TAIL_MASK = 3
TAIL_THRESHOLD = 8000

def _stage_index(stage):
    if stage not in STAGES:
        raise ValueError("Unknown stage '{}'".format(stage))
    return STAGES.index(stage)

def _safe_name(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)

class StageCache(object):
    """On-disk cache of stage results keyed by content hashes."""
    def __init__(self, directory, enabled = True):
        self.directory = directory
        self.enabled = bool(enabled)
        if self.enabled and not os.path.exists(directory):
            os.makedirs(directory)

    def path(self, name, key, ext):
        return os.path.join(self.directory, "{0}-{1}{2}".format(name, key, ext))

    def _publish(self, path, write):
        tmp = path + ".tmp"
        write(tmp)
        os.replace(tmp, path)

    def store(self, ledger_path):
        key = hash_files(ledger_path, extra = ("store", CACHE_VERSION))
        path = self.path("store", key, ".rfls")
        if self.enabled and os.path.exists(path):
            print1("Loading cached store {}".format(path))
            return ledger.load_store(path)
        store = ledger.ingest(ledger_path)
        if self.enabled:
            self._publish(path, lambda p: ledger.save_store(p, store))
        return store

    def partition(self, store, ledger_path):
        key = hash_files(ledger_path, extra = ("partition", CACHE_VERSION))
        path = self.path("partition", key, ".npy")
        if self.enabled and os.path.exists(path):
            print1("Loading cached partition {}".format(path))
            return cluster.Partition(store.addresses, np.load(path))
        partition = cluster.compute_partition(store)
        if self.enabled:
            def write(p):
                with open(p, "wb") as f:
                    np.save(f, np.asarray(partition.labels), allow_pickle = False)
            self._publish(path, write)
        return partition

    def graph(self, store, rates, ledger_path, rates_path, interpolate):
        key = hash_files(ledger_path, rates_path, extra = ("graph", bool(interpolate), CACHE_VERSION))
        path = self.path("graph", key, ".npz")
        if self.enabled and os.path.exists(path):
            print1("Loading cached address graph {}".format(path))
            with np.load(path, allow_pickle = False) as d:
                return addrgraph.AddressGraph(store.addresses, d["src"], d["dst"], d["tx_count"],
                                              d["value_sat"], d["value_usd"])
        graph = addrgraph.build_address_graph(store, rates)
        if self.enabled:
            def write(p):
                with open(p, "wb") as f:
                    np.savez(f, src = graph.src, dst = graph.dst, tx_count = graph.tx_count,
                             value_sat = graph.value_sat, value_usd = graph.value_usd)
            self._publish(path, write)
        return graph

class Analysis(object):
    """Results of a pipeline run. Attributes of stages not run are None."""
    def __init__(self, config):
        self.config = config
        self.stage = None
        self.store = None
        self.partition = None
        self.tags = None
        self.attribution = None
        self.seeds = None
        self.campaigns = None
        self.rates = None
        self.graph = None
        self.outrel = None
        self.keys = None
        self.exits = None
        self.links = None
        self.indegree = None
        self.records = None
        self.impacts = None
        self.report = None
        self.means = None
        self.series = None

    def family_results(self):
        """Returns family name -> FamilyResult of recovered artifacts."""
        results = OrderedDict()
        for family, c in self.campaigns.items():
            labels = np.unique(self.partition.labels[c.seeds])
            clusters = [tuple(self.partition.addresses[j] for j in self.partition.member_ids(l)) for l in labels]
            keys = tuple(k.address for k in self.keys[family]) if self.keys is not None else ()
            if self.records is not None:
                payment = tuple(self.store.addresses[i] for i in econ.payment_addresses(c, self.keys[family]))
                total = self.impacts[family].total_sat
            else:
                payment, total = (), 0
            results[family] = FamilyResult(family, clusters, tuple(c.expanded_addresses),
                                           tuple(c.expanded_tf_addresses), keys, payment, total)
        return results

def load_rates_or_empty(path, interpolate):
    """Loads rates; a missing file gives an empty table, so the first
    transaction date is reported as missing."""
    if path is None or not os.path.exists(path):
        print1("Rates file {} not found".format(path))
        return econ.RateTable([], [])
    return econ.load_rates(path, interpolate = interpolate)

def _family_worker(analysis, upto, mode):
    """Returns a function that analyzes one family."""
    def work(family):
        a = analysis
        c = campaign.expand(a.seeds[family], a.partition, a.store, family = family)
        c = campaign.time_filter(c, a.config.start_dates.get(family))
        if upto < _stage_index("flows"):
            return c, None, None, None
        g = flows.build_outrel(c, a.graph, store = a.store)
        keys = flows.key_addresses(g, mode = mode)
        if upto < _stage_index("econ"):
            return c, g, keys, None
        records = econ.payment_set(c, keys, a.store, a.rates)
        return c, g, keys, records
    return work

def analyze(config, upto = "report", nthreads = None, cache = None, mode = None, bucket = None,
            interpolate = None):
    """Runs the pipeline up to (and including) a stage.

    Parameters
    ----------
    config : RunConfig
        Run configuration (paths and per-family start dates).
    upto : str
        Last stage to run, one of 'ingest', 'cluster', 'expand', 'flows',
        'econ', 'report'.
    nthreads : int, optional
        Number of worker threads for per-family analysis.
    cache : bool, optional
        Whether to use the on-disk stage cache.
    mode : str, optional
        Indegree mode.
    bucket : str, optional
        Time series bucket.
    interpolate : bool, optional
        Whether missing rates are interpolated.

    Returns
    -------
    analysis : Analysis
    """
    last = _stage_index(upto)
    nthreads = get_default_config_option("nthreads", nthreads)
    cache = get_default_config_option("cache", cache)
    mode = get_default_config_option("indegree_mode", mode if mode is not None else config.indegree_mode)
    bucket = get_default_config_option("bucket", bucket if bucket is not None else config.bucket)
    interpolate = get_default_config_option("interpolate_rates",
                                            interpolate if interpolate is not None else config.interpolate_rates)
    t0 = time.time()
    a = Analysis(config)
    a.stage = upto
    stage_cache = StageCache(os.path.join(config.output, ".cache"), enabled = cache)

    a.store = stage_cache.store(config.ledger)
    if last < _stage_index("cluster"):
        return a

    a.partition = stage_cache.partition(a.store, config.ledger)
    if config.tags is not None:
        a.tags = attribution.load_tags(config.tags)
    else:
        a.tags = []
    a.attribution = attribution.attribute_clusters(a.tags, a.partition)
    if last < _stage_index("expand"):
        return a

    if config.seeds is None:
        raise InputError("Seeds file is required for stage '{}'".format(upto))
    a.seeds = campaign.load_seeds(config.seeds)
    for family in sorted(config.start_dates):
        if family not in a.seeds:
            raise InputError("Family [{}] in the run configuration has no seeds".format(family))
    families = list(a.seeds)

    if last >= _stage_index("flows"):
        a.rates = load_rates_or_empty(config.rates, interpolate)
        a.graph = stage_cache.graph(a.store, a.rates, config.ledger, config.rates, interpolate)

    work = _family_worker(a, last, mode)
    pool = None
    if nthreads > 1 and len(families) > 1:
        pool = ThreadPool(min(nthreads, len(families)))
    try:
        #imap keeps the input order
        iterator = pool.imap(work, families) if pool is not None else map(work, families)
        results = []
        print_progress(0, len(families), prefix = "families")
        for i, result in enumerate(iterator):
            results.append(result)
            print_progress(i + 1, len(families), prefix = "families")
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    a.campaigns = OrderedDict((f, r[0]) for f, r in zip(families, results))
    if last < _stage_index("flows"):
        return a
    a.outrel = OrderedDict((f, r[1]) for f, r in zip(families, results))
    a.keys = OrderedDict((f, r[2]) for f, r in zip(families, results))
    all_keys = [k for f in families for k in a.keys[f]]
    a.exits = flows.exit_points(all_keys, a.partition, a.attribution)
    a.links = flows.cross_family_links(a.keys)
    a.indegree = flows.indegree_stats(a.keys)
    if last < _stage_index("econ"):
        return a

    a.records = OrderedDict((f, r[3]) for f, r in zip(families, results))
    a.impacts = OrderedDict()
    a.means = OrderedDict()
    a.series = OrderedDict()
    for family in families:
        c, records = a.campaigns[family], a.records[family]
        n_addresses = len(econ.payment_addresses(c, a.keys[family]))
        a.impacts[family] = econ.family_impact(records, family, addresses = n_addresses)
        a.means[family] = econ.mean_payment(records, family) if records else None
        a.series[family] = econ.cumulative_series(records, family, bucket = bucket)
    a.report = econ.market_summary(a.impacts.values())
    print2("Analysis done in {:.2f}s".format(time.time() - t0))
    return a

def _dump_json(path, data):
    with open(path, "w", newline = "\n", encoding = "utf-8") as f:
        json.dump(data, f, indent = 1, sort_keys = True)
        f.write("\n")

def summary_dict(analysis):
    """Returns the machine-readable summary of an econ or report run."""
    a = analysis
    report = a.report
    families = []
    for fam in report.families:
        mean = a.means.get(fam.family)
        families.append(OrderedDict((
            ("family", fam.family), ("addresses", fam.addresses),
            ("btc", str(econ.sat_to_btc(fam.total_sat))), ("usd", econ.format_usd(fam.total_usd)),
            ("share", fam.share),
            ("mean_usd", None if mean is None else mean[0]),
            ("se_usd", None if mean is None else mean[1]))))
    tail = econ.tail_summary(report, TAIL_MASK, TAIL_THRESHOLD)
    stats = a.indegree
    return OrderedDict((
        ("families", families),
        ("total_btc", str(econ.sat_to_btc(report.total_sat))),
        ("total_usd", econ.format_usd(report.total_usd)),
        ("top_share", econ.top_share(report, 1)),
        ("top3_share", econ.top_share(report, 3)),
        ("tail", tail._asdict()),
        ("indegree", stats._asdict()),
        ("exit_points", OrderedDict((("categories", dict(a.exits.category_counts)),
                                     ("untagged", a.exits.untagged),
                                     ("tagged_clusters", a.exits.tagged_clusters),
                                     ("labels", [[f, l, n] for (f, l), n in a.exits.label_counts.items()])))),
        ("links", [[l.family1, l.family2, list(l.shared)] for l in a.links])))

def write_reports(analysis, dump_index = False, dump_edges = False, plot = False):
    """Writes report files of all stages that were run into the output directory.

    Returns a list of written file names.
    """
    a = analysis
    out = a.config.output
    if not os.path.exists(out):
        os.makedirs(out)
    written = []
    def path(name):
        p = os.path.join(out, name)
        written.append(p)
        return p

    _dump_json(path("ledger_summary.json"), ledger.summary(a.store))
    if dump_index:
        ledger.dump_index(a.store, path("address_index.csv"))
    if a.partition is None:
        return written

    cluster.write_partition(a.partition, path("partition.csv"))
    attribution.write_orphans(a.attribution, path("orphan_tags.csv"))
    if a.campaigns is None:
        return written

    campaigns = list(a.campaigns.values())
    campaign.write_expansion_table(campaigns, path("expansion.csv"))
    campaign.write_drop_report(campaigns, path("seed_drops.csv"))
    if a.keys is None:
        return written

    if dump_edges:
        addrgraph.write_edges(a.graph, path("address_edges.csv"))
        addrgraph.write_edges(cluster.build_cluster_graph(a.partition, a.graph), path("cluster_edges.csv"))
    flows.write_key_table(a.keys, path("key_summary.csv"))
    flows.write_keys(a.exits.keys, path("key_addresses.csv"))
    flows.write_exit_categories(a.exits, path("exit_points.csv"))
    flows.write_links(a.links, path("family_links.csv"))
    _dump_json(path("indegree_summary.json"), a.indegree._asdict())
    graphs = os.path.join(out, "graphs")
    if not os.path.exists(graphs):
        os.makedirs(graphs)
    for family, g in a.outrel.items():
        flows.write_outrel(g, path(os.path.join("graphs", _safe_name(family) + ".csv")))
    if a.report is None:
        return written

    econ.write_impact_table(a.report, path("impact.csv"))
    econ.write_series(a.series, path("series.csv"))
    econ.write_payments([r for f in a.records for r in a.records[f]], path("payments.csv"))
    with open(path("mean_payments.csv"), "w", newline = "", encoding = "utf-8") as f:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "payments", "mean_usd", "se_usd"))
        for family, mean in a.means.items():
            if mean is None:
                writer.writerow((family, 0, "", ""))
            else:
                se = "" if mean[1] is None else "{:.2f}".format(mean[1])
                writer.writerow((family, len(a.records[family]), "{:.2f}".format(mean[0]), se))
    _dump_json(path("summary.json"), summary_dict(a))
    if plot:
        from ransomflow import plot as rfplot
        written += rfplot.save_plots(a, os.path.join(out, "plots"))
    return written
