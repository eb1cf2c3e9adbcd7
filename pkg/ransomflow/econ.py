"""
Exchange rates and financial aggregation.

Money is accounted in integer satoshi. USD amounts of payments are computed
with :class:`decimal.Decimal` at the daily closing price of the receipt date
(UTC) and rounded half-even to cents. Reports print BTC with two decimals and
USD in whole dollars.

Rates
-----

* :func:`.load_rates` loads a ``date,close_usd`` CSV file into a :class:`RateTable`.

Aggregation
-----------

* :func:`.payment_set` lists payments received by a family's payment addresses.
* :func:`.family_impact` sums payments per family.
* :func:`.mean_payment` computes mean payment and its standard error.
* :func:`.cumulative_series` builds the longitudinal cumulative series.
* :func:`.market_summary` computes market totals and shares.
* :func:`.top_share` and :func:`.tail_summary` summarize market concentration.
"""

from __future__ import absolute_import, print_function, division

import bisect
import csv
import re
from collections import namedtuple, OrderedDict
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN

import numpy as np
from scipy import stats

from ransomflow.conf import COIN, DAY, I64DTYPE, F64DTYPE, BUCKETS, InputError, \
    InvariantError, MissingRateError, get_default_config_option, warning
from ransomflow.attribution import read_csv_rows
from ransomflow.addrgraph import merge_slots
from ransomflow.print_tools import print1, print2

RATE_HEADER = ("date", "close_usd")

CENT = Decimal("0.01")
DOLLAR = Decimal("1")

#: a payment received by a payment address
PaymentRecord = namedtuple("PaymentRecord", ["family", "address", "txid", "timestamp", "amount_sat", "amount_usd"])

#: received payments of one family
FamilyImpact = namedtuple("FamilyImpact", ["family", "addresses", "payments", "total_sat", "total_usd", "empty"])

#: one family row of the market summary
FamilyShare = namedtuple("FamilyShare", ["family", "addresses", "total_sat", "total_usd", "share"])

#: market totals and per family shares, families sorted by USD descending
ImpactReport = namedtuple("ImpactReport", ["families", "total_sat", "total_usd"])

#: one bucket of a cumulative series
SeriesPoint = namedtuple("SeriesPoint", ["bucket_start", "period_usd", "cumulative_usd"])

#: families outside the top ones
TailSummary = namedtuple("TailSummary", ["families", "below", "below_fraction", "share"])

_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")

def day_to_iso(day):
    """Converts a day number (days since epoch) to an ISO date string."""
    return str(np.datetime64(int(day), "D"))

def iso_to_day(value):
    """Converts an ISO 'YYYY-MM-DD' string to a day number."""
    value = str(value).strip()
    if not _DATE.match(value):
        raise ValueError("Invalid date '{}'".format(value))
    return int(np.datetime64(value, "D").astype(I64DTYPE))

def sat_to_btc(sat, places = CENT):
    """Converts satoshi to a Decimal BTC amount rounded half-even."""
    return (Decimal(int(sat)) / COIN).quantize(places, rounding = ROUND_HALF_EVEN)

def sat_to_usd(sat, close):
    """Converts satoshi to USD cents (Decimal) at the given closing price."""
    return (Decimal(int(sat)) * close / COIN).quantize(CENT, rounding = ROUND_HALF_EVEN)

def format_usd(usd):
    """Formats a USD amount in whole dollars."""
    return str(Decimal(usd).quantize(DOLLAR, rounding = ROUND_HALF_EVEN))

class RateTable(object):
    """Daily BTC/USD closing prices keyed by UTC day.

    Attributes
    ----------
    days : ndarray
        Sorted day numbers (days since 1970-01-01).
    closes : list of Decimal
        Closing prices, USD per BTC.
    gaps : list of str
        ISO dates missing inside the covered range (before interpolation).
    interpolated : list of str
        ISO dates filled by linear interpolation.
    """
    def __init__(self, days, closes, interpolate = False):
        days = np.asarray(days, I64DTYPE)
        order = np.argsort(days, kind = "stable")
        days = days[order]
        closes = [Decimal(closes[i]) for i in order]
        if len(days) > 1 and np.any(np.diff(days) == 0):
            raise InputError("Duplicate rate date {}".format(day_to_iso(days[1:][np.diff(days) == 0][0])))
        if any(c <= 0 for c in closes):
            raise InputError("Non-positive closing price")
        self.gaps = []
        self.interpolated = []
        if len(days):
            full = np.arange(days[0], days[-1] + 1, dtype = I64DTYPE)
            missing = np.setdiff1d(full, days)
            self.gaps = [day_to_iso(d) for d in missing]
            if interpolate and len(missing):
                closes = self._interpolate(days, closes, full)
                self.interpolated = list(self.gaps)
                days = full
        self.days = days
        self.closes = closes
        self.close_f = np.array([float(c) for c in closes], F64DTYPE)
        self.days.setflags(write = False)
        self.close_f.setflags(write = False)

    @staticmethod
    def _interpolate(days, closes, full):
        out = []
        k = 0
        for d in full:
            if days[k] == d:
                out.append(closes[k])
                k += 1
            else:
                #days[k-1] < d < days[k]
                d0, d1 = int(days[k-1]), int(days[k])
                c0, c1 = closes[k-1], closes[k]
                value = c0 + (c1 - c0) * Decimal(int(d) - d0) / Decimal(d1 - d0)
                out.append(value.quantize(CENT, rounding = ROUND_HALF_EVEN))
        return out

    def __len__(self):
        return len(self.days)

    def __repr__(self):
        return "RateTable: {0} days, {1} gaps".format(len(self), len(self.gaps))

    def _positions(self, days):
        days = np.asarray(days, I64DTYPE)
        pos = np.searchsorted(self.days, days)
        pos = np.clip(pos, 0, max(len(self.days) - 1, 0))
        if len(self.days) == 0:
            found = np.zeros(len(days), bool)
        else:
            found = self.days[pos] == days
        if not np.all(found):
            raise MissingRateError(day_to_iso(days[~found].min()))
        return pos

    def lookup(self, date):
        """Returns Decimal closing price for a date.

        Parameters
        ----------
        date : str or int
            ISO 'YYYY-MM-DD' date or a day number.
        """
        day = iso_to_day(date) if isinstance(date, str) else int(date)
        return self.closes[int(self._positions([day])[0])]

    def close_for_days(self, days):
        """Returns float closing prices for an array of day numbers.

        Raises MissingRateError naming the earliest uncovered date.
        """
        if len(days) == 0:
            return np.zeros(0, F64DTYPE)
        return self.close_f[self._positions(days)]

    def decimal_for_days(self, days):
        """Returns a list of Decimal closing prices for day numbers."""
        if len(days) == 0:
            return []
        return [self.closes[i] for i in self._positions(days)]

def load_rates(path, interpolate = None):
    """Loads daily closing prices from a CSV file with header ``date,close_usd``.

    Parameters
    ----------
    path : str
        Rates file name.
    interpolate : bool, optional
        If True, missing days inside the covered range are linearly
        interpolated. Defaults to the configured `interpolate_rates`.

    Returns
    -------
    rates : RateTable
        Loaded table. Gaps are listed in `rates.gaps` and reported with a
        warning.
    """
    interpolate = get_default_config_option("interpolate_rates", interpolate)
    days, closes, lines = [], [], {}
    for lineno, row in read_csv_rows(path, RATE_HEADER):
        try:
            day = iso_to_day(row["date"])
        except ValueError:
            raise InputError("{0}: line {1}: invalid date '{2}'".format(path, lineno, row["date"]))
        try:
            close = Decimal(row["close_usd"])
        except InvalidOperation:
            raise InputError("{0}: line {1}: invalid price '{2}'".format(path, lineno, row["close_usd"]))
        if not close.is_finite() or close <= 0:
            raise InputError("{0}: line {1}: non-positive price {2}".format(path, lineno, row["close_usd"]))
        if day in lines:
            raise InputError("{0}: line {1}: duplicate date {2} (first on line {3})".format(path, lineno, row["date"], lines[day]))
        lines[day] = lineno
        days.append(day)
        closes.append(close)
    rates = RateTable(days, closes, interpolate = bool(interpolate))
    if rates.gaps:
        action = "interpolated" if rates.interpolated else "missing"
        warning("{0}: {1} days {2}, first {3}".format(path, len(rates.gaps), action, rates.gaps[0]))
    print1("Loaded {}".format(rates))
    return rates

def payment_addresses(campaign, keys):
    """Returns sorted ids of payment addresses of a family.

    Payment addresses are the time-filtered expanded addresses minus key
    addresses that are themselves expanded (collectors).
    """
    collectors = [k.address for k in keys if k.was_expanded]
    ids = np.fromiter((_address_id(campaign.addresses, a) for a in collectors), I64DTYPE, count = len(collectors))
    return np.setdiff1d(campaign.expanded_tf, ids).astype(I64DTYPE)

def _address_id(addresses, address):
    i = bisect.bisect_left(addresses, address)
    if i < len(addresses) and addresses[i] == address:
        return i
    return -1

def payment_set(campaign, keys, store, rates):
    """Lists every payment received by the family's payment addresses.

    Parameters
    ----------
    campaign : FamilyCampaign
        Time-filtered campaign.
    keys : list of KeyAddress
        Key addresses of the family.
    store : LedgerStore
        Ledger.
    rates : RateTable
        Daily closing prices.

    Returns
    -------
    records : list of PaymentRecord
        One record per (transaction, payment address) receipt, in ledger
        order. Explicit change outputs and zero-value outputs are not
        payments.

    Raises
    ------
    MissingRateError
        If a receipt date has no rate.
    """
    ids = payment_addresses(campaign, keys)
    in_tx, in_addr, in_value = merge_slots(store.in_ptr, store.in_addr, store.in_value)
    out_tx, out_addr, out_value = merge_slots(store.out_ptr, store.out_addr, store.out_value)
    mask = np.isin(out_addr, ids) & (out_value > 0)
    n = store.n_addresses
    #explicit change (an output back to one of the spending addresses) is never counted as revenue
    mask &= ~np.isin(out_tx * n + out_addr, in_tx * n + in_addr)
    out_tx, out_addr, out_value = out_tx[mask], out_addr[mask], out_value[mask]
    closes = rates.decimal_for_days(store.time[out_tx] // DAY)
    records = [PaymentRecord(campaign.family, store.addresses[a], store.txids[t], int(store.time[t]),
                             int(v), sat_to_usd(v, c))
               for t, a, v, c in zip(out_tx, out_addr, out_value, closes)]
    print2("Family {0}: {1} payments to {2} payment addresses".format(campaign.family, len(records), len(ids)))
    return records

def family_impact(records, family, addresses = None):
    """Sums received payments of one family.

    Parameters
    ----------
    records : list of PaymentRecord
        Payments (records of other families are ignored).
    family : str
        Family name.
    addresses : int, optional
        Number of payment addresses. Defaults to the number of distinct
        receiving addresses in records.

    Returns
    -------
    impact : FamilyImpact
        Totals in satoshi and USD; `empty` is True if there are no payments.
    """
    records = [r for r in records if r.family == family]
    if addresses is None:
        addresses = len(set(r.address for r in records))
    total_sat = sum(r.amount_sat for r in records)
    total_usd = sum((r.amount_usd for r in records), Decimal("0.00"))
    return FamilyImpact(family, int(addresses), len(records), int(total_sat), total_usd, len(records) == 0)

def mean_payment(records, family):
    """Returns (mean_usd, standard_error) of a family's payments.

    The standard error uses the sample (n - 1) standard deviation. It is None
    for a single payment.

    >>> r = [PaymentRecord("f", "a", "t", 0, 1, Decimal(v)) for v in (100, 300)]
    >>> mean_payment(r, "f")
    (200.0, 100.0)
    """
    values = np.array([float(r.amount_usd) for r in records if r.family == family], F64DTYPE)
    if len(values) == 0:
        raise InputError("No payment records for family {}".format(family))
    mean = float(np.mean(values))
    if len(values) == 1:
        return mean, None
    return mean, float(stats.sem(values, ddof = 1))

def _bucket_index(days, bucket):
    if bucket == "day":
        return days
    elif bucket == "week":
        #1970-01-01 was a Thursday, weeks start on Monday
        return (days + 3) // 7
    else:
        return days.astype("datetime64[D]").astype("datetime64[M]").astype(I64DTYPE)

def _bucket_start(index, bucket):
    if bucket == "day":
        return day_to_iso(index)
    elif bucket == "week":
        return day_to_iso(index * 7 - 3)
    else:
        return str(np.datetime64(int(index), "M").astype("datetime64[D]"))

def cumulative_series(records, family, bucket = None):
    """Builds the cumulative USD series of a family's payments.

    Parameters
    ----------
    records : list of PaymentRecord
        Payments.
    family : str
        Family name.
    bucket : str, optional
        'day', 'week' (starting on Monday) or 'month'. Defaults to the
        configured bucket.

    Returns
    -------
    series : list of SeriesPoint
        One point per bucket from the first to the last payment, empty
        buckets included with zero period value.
    """
    bucket = get_default_config_option("bucket", bucket)
    if bucket not in BUCKETS:
        raise ValueError("Unsupported bucket '{}'".format(bucket))
    records = [r for r in records if r.family == family]
    if not records:
        return []
    days = np.array([r.timestamp // DAY for r in records], I64DTYPE)
    index = _bucket_index(days, bucket)
    periods = OrderedDict((i, Decimal("0.00")) for i in range(int(index.min()), int(index.max()) + 1))
    for i, r in zip(index, records):
        periods[int(i)] += r.amount_usd
    series = []
    cumulative = Decimal("0.00")
    for i, usd in periods.items():
        cumulative += usd
        series.append(SeriesPoint(_bucket_start(i, bucket), usd, cumulative))
    return series

def market_summary(impacts):
    """Computes market totals and per family shares.

    Parameters
    ----------
    impacts : list of FamilyImpact
        Impacts of all families.

    Returns
    -------
    report : ImpactReport
        Families sorted by USD descending (then by name). Shares sum to one;
        if the market total is zero, shares are equal.
    """
    impacts = list(impacts)
    if not impacts:
        raise InputError("Market summary needs at least one family")
    total_usd = sum((Decimal(i.total_usd) for i in impacts), Decimal("0.00"))
    total_sat = sum(i.total_sat for i in impacts)
    ordered = sorted(impacts, key = lambda i: (-Decimal(i.total_usd), i.family))
    families = []
    for i in ordered:
        if total_usd > 0:
            share = float(Decimal(i.total_usd) / total_usd)
        else:
            share = 1. / len(impacts)
        families.append(FamilyShare(i.family, i.addresses, i.total_sat, Decimal(i.total_usd), share))
    if abs(sum(f.share for f in families) - 1.) > 1e-9:
        raise InvariantError("Market shares do not sum to one")
    return ImpactReport(families, int(total_sat), total_usd)

def top_share(report, k):
    """Returns the combined market share of the `k` largest families."""
    return float(sum(f.share for f in report.families[:k]))

def tail_summary(report, mask, threshold):
    """Summarizes the families outside the `mask` largest ones.

    Parameters
    ----------
    report : ImpactReport
        Market summary.
    mask : int
        Number of top families to exclude.
    threshold : number
        USD threshold.

    Returns
    -------
    summary : TailSummary
        Number of remaining families, how many of them received less than
        `threshold` USD, that count as a fraction, and the market share of
        all remaining families.
    """
    tail = report.families[mask:]
    threshold = Decimal(threshold)
    below = sum(1 for f in tail if f.total_usd < threshold)
    fraction = below / len(tail) if tail else 0.
    return TailSummary(len(tail), below, fraction, float(sum(f.share for f in tail)))

def _open_writer(file):
    if isinstance(file, str):
        return open(file, "w", newline = "", encoding = "utf-8"), True
    return file, False

def write_impact_table(report, file):
    """Writes CSV ``family,addresses,btc,usd`` in report order.

    BTC is written with two decimals and USD in whole dollars.
    """
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "addresses", "btc", "usd"))
        for fam in report.families:
            writer.writerow((fam.family, fam.addresses, sat_to_btc(fam.total_sat), format_usd(fam.total_usd)))
    finally:
        if own_fid == True:
            f.close()

def write_series(series_by_family, file):
    """Writes CSV ``family,bucket_start,period_usd,cumulative_usd`` (cents)."""
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(("family", "bucket_start", "period_usd", "cumulative_usd"))
        for family in sorted(series_by_family):
            for p in series_by_family[family]:
                writer.writerow((family, p.bucket_start, p.period_usd, p.cumulative_usd))
    finally:
        if own_fid == True:
            f.close()

def write_payments(records, file):
    """Writes CSV ``family,address,txid,timestamp,amount_sat,amount_usd``."""
    f, own_fid = _open_writer(file)
    try:
        writer = csv.writer(f, lineterminator = "\n")
        writer.writerow(PaymentRecord._fields)
        writer.writerows(records)
    finally:
        if own_fid == True:
            f.close()
