"""
Deterministic synthetic ledgers with planted ransomware campaigns.

For every family the generator plants:

* victims, funded by coinbase transactions, each paying one ransom to a fresh
  payment address (with change back to the victim's own address),
* a chain of consolidation transactions: stage j co-spends the payment
  addresses of group j (``fan_in`` addresses) together with the previous
  collector and pays the collector of stage j. All collectors but the last
  are spent again, so they end up in the family cluster (key expanded
  addresses). The last stage pays the final collector and, according to the
  exit profile, deposit addresses of tagged services (new key addresses),
* pre-campaign noise addresses, funded before the start month and co-spent
  in the first consolidation stage (removed by the time filter),
* service clusters: deposits are swept together with a tagged hot wallet, so
  only cluster propagation resolves the exit points.

Payment addresses of victims outside the consolidation groups are seeds, as
is one (or `n_seeds`) payment address of the first group. Background traffic
among unrelated users is added on top.

Outputs are byte-identical for identical (spec, seed).
"""

from __future__ import absolute_import, print_function, division

import csv
import hashlib
import json
import os
from collections import namedtuple, OrderedDict
from configparser import ConfigParser
from decimal import Decimal, ROUND_HALF_EVEN

import numpy as np

from ransomflow.conf import DAY, InputError
from ransomflow.campaign import parse_month
from ransomflow.econ import day_to_iso
from ransomflow.print_tools import print1

#: planted campaign parameters; ransom is (min_sat, max_sat), fixed if equal
CampaignSpec = namedtuple("CampaignSpec", ["family", "n_victims", "ransom", "n_collectors", "fan_in",
                                           "start", "duration_days", "noise", "exit_exchange",
                                           "exit_gambling", "exit_mixer", "collector_group",
                                           "n_seeds", "unused_seeds"],
                          defaults = (10, (30000000, 150000000), 1, None, "2016-02", 60, 0., 0., 0., 0.,
                                      "", 1, 0))

#: a full testbed: campaigns plus the number of background transactions
TestbedSpec = namedtuple("TestbedSpec", ["campaigns", "background"], defaults = (0,))

#: planted truth of one family
FamilyTruth = namedtuple("FamilyTruth", ["family", "seeds", "unused_seeds", "payment_addresses", "clusters",
                                         "expanded", "expanded_tf", "collectors", "key_expanded", "exits",
                                         "ransom_sat", "consolidation_sat"])

#: what the pipeline recovered for one family
FamilyResult = namedtuple("FamilyResult", ["family", "clusters", "expanded", "expanded_tf", "keys",
                                           "payment_addresses", "total_sat"])

#: precision and recall of one recovered artifact
Score = namedtuple("Score", ["precision", "recall"])

#: tagged services, one per exit category
SERVICES = OrderedDict((("exchange", "SynthExchange"), ("gambling", "SynthDice"), ("mixer", "SynthMixer")))

#: fee paid by every generated transaction, in satoshi
FEE = 10000

#: first price of the generated rate walk, USD per BTC
START_PRICE = Decimal("400.00")

#: value of pre-campaign noise funding and service hot wallets, in satoshi
NOISE_VALUE = 5000000
HOT_WALLET_VALUE = 100000000

#: funding range of background users, in satoshi
COIN_MIN = 10000000
COIN_MAX = 1000000000

def _hash(*parts):
    return hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).hexdigest()

def validate_spec(spec):
    """Checks a campaign spec and returns it with defaults resolved.

    Raises InputError for infeasible specs.
    """
    family = str(spec.family).strip()
    if family == "":
        raise InputError("Campaign family name is empty")
    lo, hi = (spec.ransom, spec.ransom) if np.isscalar(spec.ransom) else spec.ransom
    lo, hi = int(lo), int(hi)
    n_victims, n_collectors = int(spec.n_victims), int(spec.n_collectors)
    fan_in = spec.fan_in
    if fan_in is None:
        fan_in = n_victims // n_collectors if n_collectors else 0
    fan_in = int(fan_in)
    for name, value in (("n_victims", n_victims), ("n_collectors", n_collectors), ("fan_in", fan_in),
                        ("duration_days", spec.duration_days), ("n_seeds", spec.n_seeds),
                        ("unused_seeds", spec.unused_seeds)):
        if int(value) < 0:
            raise InputError("{0}: {1} must be >= 0".format(family, name))
    if not 0 < lo <= hi:
        raise InputError("{}: ransom range must be positive and ordered".format(family))
    fractions = (float(spec.noise), float(spec.exit_exchange), float(spec.exit_gambling), float(spec.exit_mixer))
    if any(not 0. <= f <= 1. for f in fractions):
        raise InputError("{}: fractions must be in [0,1]".format(family))
    if sum(fractions[1:]) > 1.:
        raise InputError("{}: exit fractions sum to more than 1".format(family))
    if n_collectors > 0 and fan_in < 2:
        raise InputError("{}: fan_in must be at least 2 to plant collectors".format(family))
    if fan_in * n_collectors > n_victims:
        raise InputError("{0}: fan_in x n_collectors = {1} exceeds {2} victims".format(
            family, fan_in * n_collectors, n_victims))
    if n_collectors == 0 and (fractions[0] > 0 or sum(fractions[1:]) > 0):
        raise InputError("{}: noise and exits need at least one collector".format(family))
    if n_collectors > 0 and int(spec.n_seeds) < 1:
        raise InputError("{}: at least one seed in the consolidated cluster is needed".format(family))
    if int(spec.n_seeds) > fan_in and n_collectors > 0:
        raise InputError("{}: n_seeds exceeds fan_in".format(family))
    if int(spec.duration_days) < 1:
        raise InputError("{}: duration_days must be at least 1".format(family))
    parse_month(spec.start)
    return spec._replace(family = family, n_victims = n_victims, ransom = (lo, hi),
                         n_collectors = n_collectors, fan_in = fan_in, duration_days = int(spec.duration_days),
                         noise = fractions[0], exit_exchange = fractions[1], exit_gambling = fractions[2],
                         exit_mixer = fractions[3], collector_group = str(spec.collector_group or "").strip(),
                         n_seeds = int(spec.n_seeds), unused_seeds = int(spec.unused_seeds))

class _LedgerBuilder(object):
    """Collects transactions and assigns heights and txids."""
    def __init__(self, seed):
        self.seed = seed
        self.records = []

    def address(self, *parts):
        return "1" + _hash("addr", self.seed, *parts)[:33]

    def add(self, time, inputs, outputs):
        seq = len(self.records)
        txid = _hash("tx", self.seed, seq, time, inputs, outputs)
        self.records.append((int(time), seq, txid,
                             [{"addr" : a, "value" : int(v)} for a, v in inputs],
                             [{"addr" : a, "value" : int(v)} for a, v in outputs]))
        return txid

    def lines(self):
        """Yields ledger lines ordered by time, one block per transaction."""
        for height, (time, seq, txid, inputs, outputs) in enumerate(sorted(self.records, key = lambda r: (r[0], r[1])), 1):
            yield json.dumps(OrderedDict((("txid", txid), ("height", height), ("time", time),
                                          ("inputs", inputs), ("outputs", outputs))), separators = (",", ":"))

    def time_range(self):
        times = [r[0] for r in self.records]
        return min(times), max(times)

def _plant_campaign(builder, spec, rng, deposits, final_collectors):
    """Plants one campaign. Returns its FamilyTruth (without exits resolved)."""
    family = spec.family
    start = parse_month(spec.start)
    duration = spec.duration_days * DAY
    lo, hi = spec.ransom
    n, m, fan_in = spec.n_victims, spec.n_collectors, spec.fan_in

    ransoms = rng.integers(lo, hi + 1, size = n) if hi > lo else np.full(n, lo)
    extras = rng.integers(2 * FEE, 10 * FEE * 100, size = n)
    payments = []
    for i in range(n):
        victim = builder.address(family, "victim", i)
        pay = builder.address(family, "payment", i)
        t = start + 3600 + (i * 7 * duration) // (10 * max(n, 1))
        builder.add(t - 1800, [], [(victim, int(ransoms[i]) + int(extras[i]))])
        builder.add(t, [(victim, int(ransoms[i]) + int(extras[i]))],
                    [(pay, int(ransoms[i])), (victim, int(extras[i]) - FEE)])
        payments.append((pay, int(ransoms[i])))

    n_noise = int(round(spec.noise * n)) if m > 0 else 0
    noise = []
    for k in range(n_noise):
        addr = builder.address(family, "noise", k)
        builder.add(start - 15 * DAY + 60 * k, [], [(addr, NOISE_VALUE)])
        noise.append((addr, NOISE_VALUE))

    collectors = OrderedDict()
    key_expanded = []
    consolidation = 0
    cluster = []
    previous = None
    exits = OrderedDict()
    for j in range(m):
        group = payments[j * fan_in:(j + 1) * fan_in]
        inputs = list(group)
        if j == 0:
            inputs += noise
        if previous is not None:
            inputs.append(previous)
        cluster += [a for a, v in inputs]
        total = sum(v for a, v in inputs) - FEE
        t = start + (8 * duration) // 10 + (j + 1) * 3600
        indegree = len(group) + (1 if previous is not None else 0)
        if j < m - 1:
            collector = builder.address(family, "collector", j)
            builder.add(t, inputs, [(collector, total)])
            collectors[collector] = indegree
            key_expanded.append(collector)
            consolidation += total
            previous = (collector, total)
        else:
            outputs = []
            rest = total
            for category in SERVICES:
                fraction = getattr(spec, "exit_" + category)
                if fraction > 0:
                    deposit = builder.address(family, "deposit", category)
                    value = int(total * fraction)
                    outputs.append((deposit, value))
                    rest -= value
                    deposits.setdefault(category, []).append((deposit, value))
                    exits[deposit] = (SERVICES[category], category)
                    collectors[deposit] = indegree
            group_name = spec.collector_group or family
            final = builder.address("final", group_name)
            final_collectors.add(final)
            outputs.insert(0, (final, rest))
            builder.add(t, inputs, outputs)
            collectors[final] = indegree

    consolidated = set(cluster)
    consolidated.update(key_expanded)
    leftover = [a for a, v in payments[m * fan_in:]]
    seeds = [a for a, v in payments[:spec.n_seeds]] if m > 0 else []
    seeds += leftover
    unused = [builder.address(family, "unused", k) for k in range(spec.unused_seeds)]
    clusters = [tuple(sorted(consolidated))] if consolidated else []
    clusters += [(a,) for a in sorted(leftover)]
    expanded = sorted(consolidated.union(leftover))
    noise_set = set(a for a, v in noise)
    return FamilyTruth(family, tuple(seeds), tuple(unused), tuple(sorted(a for a, v in payments)),
                       tuple(clusters), tuple(expanded), tuple(a for a in expanded if a not in noise_set),
                       collectors, tuple(sorted(key_expanded)), exits,
                       int(ransoms.sum()), int(consolidation))

def _plant_services(builder, deposits, t0, t1):
    """Funds hot wallets and sweeps deposits. Returns (address, label, category) tags."""
    tags = []
    for k, (category, label) in enumerate(SERVICES.items()):
        hot = builder.address("service", category, "hot")
        builder.add(t0 + k, [], [(hot, HOT_WALLET_VALUE)])
        tags.append((hot, label, category))
        if category in deposits:
            inputs = [(hot, HOT_WALLET_VALUE)] + sorted(deposits[category])
            cold = builder.address("service", category, "cold")
            builder.add(t1 + 60 * k, inputs, [(cold, sum(v for a, v in inputs) - FEE)])
    return tags

def _plant_background(builder, rng, n_tx, t0, t1):
    if n_tx <= 0:
        return
    n_users = max(10, n_tx // 5)
    pool = []
    for u in range(n_users):
        addr = builder.address("user", u)
        value = int(rng.integers(COIN_MIN, COIN_MAX))
        builder.add(t0, [], [(addr, value)])
        pool.append((addr, value))
    times = np.sort(rng.integers(t0 + 1, t1, size = n_tx))
    new = n_users
    for t in times:
        if not pool:
            break
        k = int(min(rng.integers(1, 4), len(pool)))
        picks = sorted(rng.choice(len(pool), size = k, replace = False).tolist(), reverse = True)
        inputs = []
        for p in picks:
            #swap-remove, picks are in descending order
            pool[p], pool[-1] = pool[-1], pool[p]
            inputs.append(pool.pop())
        total = sum(v for a, v in inputs)
        if total <= 4 * FEE:
            continue
        pay = int(total * rng.uniform(0.1, 0.9))
        if rng.random() < 0.5:
            payee = builder.address("user", new)
            new += 1
        else:
            payee = builder.address("user", int(rng.integers(0, new)))
        change = total - pay - FEE
        outputs = [(payee, pay), (inputs[0][0], change)]
        builder.add(int(t), inputs, outputs)
        pool.extend(outputs)

def _rate_walk(rng, day0, day1):
    steps = rng.normal(0., 0.03, size = day1 - day0)
    price = START_PRICE
    closes = [price]
    for s in steps:
        price = (price * Decimal(repr(float(s))).exp()).quantize(Decimal("0.01"), rounding = ROUND_HALF_EVEN)
        closes.append(max(price, Decimal("1.00")))
    return [(day_to_iso(day0 + k), c) for k, c in enumerate(closes)]

def _write_csv(path, header, rows):
    with open(path, "w", newline = "", encoding = "utf-8") as f:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(header)
        writer.writerows(rows)

def generate(spec, rng_seed = 0, directory = "."):
    """Generates a synthetic ledger with planted campaigns.

    Parameters
    ----------
    spec : TestbedSpec or list of CampaignSpec
        Testbed specification.
    rng_seed : int
        Seed of the random generator.
    directory : str
        Output directory. It receives ``ledger.jsonl``, ``seeds.csv``,
        ``tags.csv``, ``rates.csv``, ``truth.json`` and ``run.ini``.

    Returns
    -------
    truth : OrderedDict
        Family name -> FamilyTruth.

    Raises
    ------
    InputError
        For infeasible specs.
    """
    if not isinstance(spec, TestbedSpec):
        spec = TestbedSpec(list(spec))
    campaigns = [validate_spec(c) for c in spec.campaigns]
    campaigns.sort(key = lambda c: c.family)
    if len(set(c.family for c in campaigns)) != len(campaigns):
        raise InputError("Duplicate family in testbed spec")
    rng = np.random.default_rng(int(rng_seed))
    builder = _LedgerBuilder(int(rng_seed))

    deposits = {}
    final_collectors = set()
    truth = OrderedDict()
    for c in campaigns:
        truth[c.family] = _plant_campaign(builder, c, rng, deposits, final_collectors)

    starts = [parse_month(c.start) for c in campaigns] or [parse_month("2016-01")]
    t0 = min(starts) - 30 * DAY
    t1 = max(parse_month(c.start) + c.duration_days * DAY for c in campaigns) + DAY if campaigns else t0 + 30 * DAY
    tags = _plant_services(builder, deposits, t0, t1)
    _plant_background(builder, rng, int(spec.background), t0 + 60, t1)

    first, last = builder.time_range()
    rates = _rate_walk(rng, first // DAY, last // DAY)

    if not os.path.exists(directory):
        os.makedirs(directory)
    with open(os.path.join(directory, "ledger.jsonl"), "w", newline = "\n", encoding = "utf-8") as f:
        for line in builder.lines():
            f.write(line + "\n")
    seed_rows = []
    for family, t in truth.items():
        seed_rows += [(family, a, "synthetic") for a in t.seeds + t.unused_seeds]
    _write_csv(os.path.join(directory, "seeds.csv"), ("family", "address", "source"), seed_rows)
    _write_csv(os.path.join(directory, "tags.csv"), ("address", "label", "category", "source"),
               [(a, l, c, "synthetic") for a, l, c in tags])
    _write_csv(os.path.join(directory, "rates.csv"), ("date", "close_usd"), rates)
    save_truth(os.path.join(directory, "truth.json"), truth)
    write_run_config(os.path.join(directory, "run.ini"), campaigns)
    print1("Generated {0} transactions for {1} families in {2}".format(len(builder.records), len(truth), directory))
    return truth

def write_run_config(path, campaigns):
    """Writes a run configuration for the generated inputs."""
    lines = ["[paths]", "ledger = ledger.jsonl", "seeds = seeds.csv", "tags = tags.csv",
             "rates = rates.csv", "output = report", "", "[analysis]",
             "indegree_mode = distinct_sources", "bucket = month", "interpolate_rates = no", ""]
    for c in campaigns:
        lines += ["[{}]".format(c.family), 'start = "{}"'.format(c.start), ""]
    with open(path, "w", newline = "\n", encoding = "utf-8") as f:
        f.write("\n".join(lines))

def save_truth(path, truth):
    """Saves ground truth as JSON."""
    data = OrderedDict()
    for family, t in truth.items():
        d = t._asdict()
        d["clusters"] = [list(c) for c in t.clusters]
        d["exits"] = OrderedDict((a, list(v)) for a, v in t.exits.items())
        data[family] = d
    with open(path, "w", newline = "\n", encoding = "utf-8") as f:
        json.dump(data, f, indent = 1)
        f.write("\n")

def load_truth(path):
    """Loads ground truth saved by :func:`save_truth`."""
    with open(path, "r", encoding = "utf-8") as f:
        data = json.load(f, object_pairs_hook = OrderedDict)
    truth = OrderedDict()
    for family, d in data.items():
        d["clusters"] = tuple(tuple(c) for c in d["clusters"])
        d["exits"] = OrderedDict((a, tuple(v)) for a, v in d["exits"].items())
        for key in ("seeds", "unused_seeds", "payment_addresses", "expanded", "expanded_tf", "key_expanded"):
            d[key] = tuple(d[key])
        truth[family] = FamilyTruth(**d)
    return truth

_INT_FIELDS = ("n_victims", "n_collectors", "fan_in", "duration_days", "n_seeds", "unused_seeds")
_FLOAT_FIELDS = ("noise", "exit_exchange", "exit_gambling", "exit_mixer")

def load_spec(path):
    """Loads a testbed spec from an ini file.

    The ``[testbed]`` section holds ``background`` (number of background
    transactions). Every other section is a family; its options are the
    CampaignSpec fields, ``ransom`` given either as one value or as
    ``min:max`` satoshi.
    """
    config = ConfigParser()
    if not config.read(path, encoding = "utf-8"):
        raise InputError("Could not read testbed spec {}".format(path))
    background = config.getint("testbed", "background", fallback = 0)
    campaigns = []
    for section in config.sections():
        if section == "testbed":
            continue
        kwargs = {}
        for key, value in config.items(section):
            value = value.strip().strip('"').strip("'")
            if key not in _INT_FIELDS + _FLOAT_FIELDS + ("ransom", "start", "collector_group"):
                raise InputError("{0}: unknown option '{1}' in section [{2}]".format(path, key, section))
            try:
                if key in _INT_FIELDS:
                    kwargs[key] = int(value)
                elif key in _FLOAT_FIELDS:
                    kwargs[key] = float(value)
                elif key == "ransom":
                    parts = value.split(":")
                    kwargs[key] = (int(parts[0]), int(parts[-1]))
                else:
                    kwargs[key] = value
            except ValueError:
                raise InputError("{0}: invalid value '{1}' for '{2}' in section [{3}]".format(path, value, key, section))
        campaigns.append(CampaignSpec(section, **kwargs))
    return TestbedSpec(campaigns, background)

def default_spec():
    """Returns the built-in demo testbed: three families, two sharing a final collector."""
    return TestbedSpec([
        CampaignSpec("Alpha", n_victims = 40, n_collectors = 3, fan_in = 10, start = "2016-02",
                     noise = 0.1, exit_exchange = 0.5, exit_gambling = 0.1, collector_group = "shared"),
        CampaignSpec("Beta", n_victims = 20, n_collectors = 1, fan_in = 8, start = "2016-04",
                     exit_mixer = 0.3, collector_group = "shared", unused_seeds = 2),
        CampaignSpec("Gamma", n_victims = 5, n_collectors = 0, fan_in = 0, start = "2016-03",
                     ransom = (1500000000, 1500000000))],
        background = 200)

def _score(result, truth):
    result, truth = set(result), set(truth)
    hit = len(result & truth)
    precision = hit / len(result) if result else 1.
    recall = hit / len(truth) if truth else 1.
    return Score(precision, recall)

def evaluate(results, truth):
    """Scores recovered artifacts against planted truth.

    Parameters
    ----------
    results : dict
        Family name -> FamilyResult.
    truth : dict
        Family name -> FamilyTruth.

    Returns
    -------
    scores : OrderedDict
        Family name -> OrderedDict of artifact -> Score for 'clusters',
        'expanded', 'expanded_tf', 'keys' and 'payment_addresses', plus
        'total_exact' (bool).

    Raises
    ------
    InputError
        If the families differ.
    """
    if set(results) != set(truth):
        raise InputError("Family mismatch: results {0}, truth {1}".format(sorted(results), sorted(truth)))
    scores = OrderedDict()
    for family in sorted(truth):
        r, t = results[family], truth[family]
        s = OrderedDict()
        s["clusters"] = _score((tuple(sorted(c)) for c in r.clusters), t.clusters)
        s["expanded"] = _score(r.expanded, t.expanded)
        s["expanded_tf"] = _score(r.expanded_tf, t.expanded_tf)
        s["keys"] = _score(r.keys, t.collectors)
        s["payment_addresses"] = _score(r.payment_addresses, t.payment_addresses)
        s["total_exact"] = int(r.total_sat) == int(t.ransom_sat)
        scores[family] = s
    return scores

def truth_as_result(truth):
    """Returns a FamilyResult that reproduces the truth exactly."""
    return FamilyResult(truth.family, truth.clusters, truth.expanded, truth.expanded_tf,
                        tuple(truth.collectors), truth.payment_addresses, truth.ransom_sat)
