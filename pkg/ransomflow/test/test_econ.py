import io
import os
import tempfile
import unittest
from decimal import Decimal

import numpy as np

from ransomflow import ledger, cluster, campaign, econ
from ransomflow.conf import InputError, MissingRateError, DAY
from ransomflow.econ import PaymentRecord, FamilyImpact
from ransomflow.flows import KeyAddress
from ransomflow.test.ledgers import write_ledger, write_csv, sat, T0

#USD column of the published top 15 families
TABLE = [("Locky", 7834737), ("CryptXXX", 1878696), ("DMALockerv3", 1500630), ("SamSam", 599687),
         ("CryptoLocker", 519991), ("GlobeImposter", 116014), ("WannaCry", 102703),
         ("CryptoTorLocker2015", 67221), ("APT", 31971), ("NoobCrypt", 25080), ("Globe", 24319),
         ("Globev3", 16008), ("EDA2", 15111), ("NotPetya", 11458), ("Razy", 8073)]
MARKET = 12768536


def impact(family, usd, sat_ = 0):
    return FamilyImpact(family, 1, 1, sat_, Decimal(usd), False)


def record(family, usd, timestamp = T0, amount = 1):
    return PaymentRecord(family, "A", "t", timestamp, amount, Decimal(usd))


class TestRates(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "rates.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def test_three_rows(self):
        write_csv(self.path, econ.RATE_HEADER, [("2016-02-01", "370.00"), ("2016-02-02", "372.50"),
                                                ("2016-02-03", "368.10")])
        rates = econ.load_rates(self.path, interpolate = False)
        self.assertEqual(len(rates), 3)
        self.assertEqual(rates.lookup("2016-02-02"), Decimal("372.50"))
        self.assertEqual(rates.lookup(T0 // DAY), Decimal("370.00"))
        self.assertIn("2016-02-03", rates)
        self.assertNotIn("2016-02-04", rates)
        self.assertEqual(rates.gaps, [])

    def test_gap(self):
        write_csv(self.path, econ.RATE_HEADER, [("2016-02-01", "100"), ("2016-02-04", "130")])
        with self.assertWarns(UserWarning):
            rates = econ.load_rates(self.path, interpolate = False)
        self.assertEqual(rates.gaps, ["2016-02-02", "2016-02-03"])
        with self.assertRaises(MissingRateError) as cm:
            rates.lookup("2016-02-03")
        self.assertEqual(cm.exception.date, "2016-02-03")

    def test_interpolation(self):
        write_csv(self.path, econ.RATE_HEADER, [("2016-02-01", "100"), ("2016-02-04", "130")])
        with self.assertWarns(UserWarning):
            rates = econ.load_rates(self.path, interpolate = True)
        self.assertEqual(rates.lookup("2016-02-02"), Decimal("110.00"))
        self.assertEqual(rates.lookup("2016-02-03"), Decimal("120.00"))
        self.assertEqual(rates.interpolated, ["2016-02-02", "2016-02-03"])

    def test_earliest_missing_date(self):
        rates = econ.RateTable([T0 // DAY], [Decimal("1")])
        with self.assertRaises(MissingRateError) as cm:
            rates.close_for_days(np.array([T0 // DAY + 5, T0 // DAY + 2, T0 // DAY]))
        self.assertEqual(cm.exception.date, "2016-02-03")
        with self.assertRaises(MissingRateError):
            econ.RateTable([], []).lookup("2016-02-01")

    def test_bad_rows(self):
        for rows in ([("2016-02-01", "abc")], [("2016-02-01", "-5")], [("2016-2-1", "5")],
                     [("2016-02-01", "5"), ("2016-02-01", "6")]):
            write_csv(self.path, econ.RATE_HEADER, rows)
            with self.assertRaises(InputError):
                econ.load_rates(self.path)

    def test_file_scan(self):
        rng = np.random.default_rng(4)
        days = np.arange(365) + T0 // DAY
        rows = [(econ.day_to_iso(d), "{:.2f}".format(rng.uniform(300, 1000))) for d in days]
        write_csv(self.path, econ.RATE_HEADER, rows)
        rates = econ.load_rates(self.path)
        for k in rng.choice(len(rows), 50, replace = False):
            self.assertEqual(rates.lookup(rows[k][0]), Decimal(rows[k][1]))


class TestPaymentSet(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        path = os.path.join(self.tmp.name, "ledger.jsonl")
        #victims V1, V2 pay A and B; A and B are co-spent into collector X
        #which is spent again together with A, so X is in the family cluster
        write_ledger(path, [("f1", 1, T0, [], [("V1", sat(2))]),
                            ("f2", 2, T0, [], [("V2", sat(2))]),
                            ("p1", 3, T0 + 60, [("V1", sat(2))], [("A", sat(1)), ("V1", sat(1))]),
                            ("p2", 4, T0 + DAY, [("V2", sat(2))], [("B", sat(1)), ("V2", sat(1))]),
                            ("c1", 5, T0 + DAY + 60, [("A", sat(0.5)), ("B", sat(1))], [("X", sat(1.5))]),
                            ("p3", 6, T0 + DAY + 120, [("V1", sat(1))], [("A", sat(0.5)), ("Z", 0)]),
                            ("c2", 7, T0 + 2 * DAY, [("X", sat(1.5)), ("A", sat(0.5))],
                             [("Y", sat(1.9)), ("A", sat(0.1))])])
        self.store = ledger.ingest(path)
        partition = cluster.compute_partition(self.store)
        c = campaign.expand(["A"], partition, self.store, family = "Fam")
        self.campaign = campaign.time_filter(c, "2016-02")
        self.keys = [KeyAddress("X", "Fam", 2, True, ())]
        days = np.arange(T0 // DAY, T0 // DAY + 3)
        self.rates = econ.RateTable(days, [Decimal("500.00"), Decimal("400.00"), Decimal("300.00")])

    def tearDown(self):
        self.tmp.cleanup()

    def test_collectors_are_excluded(self):
        self.assertEqual(self.campaign.expanded_tf_addresses, ["A", "B", "X"])
        ids = econ.payment_addresses(self.campaign, self.keys)
        self.assertEqual([self.store.addresses[i] for i in ids], ["A", "B"])
        records = econ.payment_set(self.campaign, self.keys, self.store, self.rates)
        #change of c2 back to A is not a payment
        self.assertEqual([(r.address, r.amount_sat, r.amount_usd) for r in records],
                         [("A", sat(1), Decimal("500.00")), ("B", sat(1), Decimal("400.00")),
                          ("A", sat(0.5), Decimal("200.00"))])
        self.assertEqual([r.txid for r in records], [self.store.txids[i] for i in (2, 3, 5)])

    def test_explicit_change_is_not_a_payment(self):
        records = econ.payment_set(self.campaign, self.keys, self.store, self.rates)
        c2 = self.store.txids[6]
        self.assertEqual(self.store.transaction(6).outputs[-1], ledger.TxSlot("A", sat(0.1)))
        self.assertNotIn(c2, [r.txid for r in records])
        self.assertNotIn(sat(0.1), [r.amount_sat for r in records])

    def test_double_counting(self):
        records = econ.payment_set(self.campaign, [], self.store, self.rates)
        self.assertEqual(sum(r.amount_sat for r in records), sat(4))
        records = econ.payment_set(self.campaign, self.keys, self.store, self.rates)
        self.assertEqual(sum(r.amount_sat for r in records), sat(2.5))

    def test_missing_rate(self):
        rates = econ.RateTable([T0 // DAY], [Decimal("500.00")])
        with self.assertRaises(MissingRateError) as cm:
            econ.payment_set(self.campaign, self.keys, self.store, rates)
        self.assertEqual(cm.exception.date, "2016-02-02")


class TestImpact(unittest.TestCase):

    def test_family_impact(self):
        records = [PaymentRecord("F", "A", "t1", T0, sat(1), econ.sat_to_usd(sat(1), Decimal("500.00"))),
                   PaymentRecord("F", "B", "t2", T0, sat(1), econ.sat_to_usd(sat(1), Decimal("500.00"))),
                   PaymentRecord("G", "C", "t3", T0, sat(7), Decimal("1"))]
        i = econ.family_impact(records, "F")
        self.assertEqual(econ.sat_to_btc(i.total_sat), Decimal("2.00"))
        self.assertEqual(i.total_usd, Decimal("1000.00"))
        self.assertEqual((i.addresses, i.payments, i.empty), (2, 2, False))

    def test_empty_family(self):
        i = econ.family_impact([], "F", addresses = 3)
        self.assertEqual((i.addresses, i.payments, i.total_sat, i.total_usd, i.empty), (3, 0, 0, Decimal("0"), True))

    def test_usd_rounding(self):
        self.assertEqual(econ.sat_to_usd(1, Decimal("500.00")), Decimal("0.00"))
        self.assertEqual(econ.sat_to_usd(1000, Decimal("500.00")), Decimal("0.00"))
        self.assertEqual(econ.sat_to_usd(3000, Decimal("500.00")), Decimal("0.02"))
        self.assertEqual(econ.format_usd(Decimal("2.50")), "2")
        self.assertEqual(econ.format_usd(Decimal("3.50")), "4")

    def test_mean_payment(self):
        self.assertEqual(econ.mean_payment([record("F", 100), record("F", 300)], "F"), (200., 100.))
        self.assertEqual(econ.mean_payment([record("F", 116014)], "F"), (116014., None))
        self.assertEqual(econ.mean_payment([record("F", 5)] * 4, "F"), (5., 0.))
        with self.assertRaises(InputError):
            econ.mean_payment([record("G", 5)], "F")

    def test_cumulative_series(self):
        records = [record("F", 10, T0 + k * DAY) for k in range(3)]
        series = econ.cumulative_series(records, "F", bucket = "day")
        self.assertEqual([p.cumulative_usd for p in series], [10, 20, 30])
        self.assertEqual(series[0].bucket_start, "2016-02-01")

    def test_empty_bucket(self):
        records = [record("F", 10, T0), record("F", 5, T0 + 2 * DAY)]
        series = econ.cumulative_series(records, "F", bucket = "day")
        self.assertEqual([(p.period_usd, p.cumulative_usd) for p in series], [(10, 10), (0, 10), (5, 15)])
        self.assertEqual(econ.cumulative_series([], "F", bucket = "day"), [])

    def test_week_and_month_buckets(self):
        #2016-02-01 was a Monday
        records = [record("F", 1, T0 - DAY), record("F", 2, T0), record("F", 4, T0 + 6 * DAY),
                   record("F", 8, T0 + 29 * DAY)]
        weeks = econ.cumulative_series(records, "F", bucket = "week")
        self.assertEqual(weeks[0].bucket_start, "2016-01-25")
        self.assertEqual(weeks[1].bucket_start, "2016-02-01")
        self.assertEqual(weeks[1].period_usd, 6)
        months = econ.cumulative_series(records, "F", bucket = "month")
        self.assertEqual([(p.bucket_start, p.period_usd) for p in months],
                         [("2016-01-01", 1), ("2016-02-01", 6), ("2016-03-01", 8)])
        with self.assertRaises(ValueError):
            econ.cumulative_series(records, "F", bucket = "year")


class TestMarket(unittest.TestCase):

    def table_report(self):
        impacts = [impact(f, usd) for f, usd in TABLE]
        residual = MARKET - sum(usd for f, usd in TABLE)
        impacts.append(impact("Other", residual))
        return econ.market_summary(impacts)

    def test_published_shares(self):
        report = self.table_report()
        self.assertEqual(report.total_usd, MARKET)
        self.assertEqual(report.families[0].family, "Locky")
        self.assertAlmostEqual(econ.top_share(report, 1), 0.6136, places = 4)
        self.assertAlmostEqual(econ.top_share(report, 3), 0.8783, places = 4)
        self.assertAlmostEqual(sum(f.share for f in report.families), 1., places = 9)

    def test_tail(self):
        tail = econ.tail_summary(self.table_report(), 3, 8000)
        self.assertEqual(tail.families, 13)
        self.assertEqual(tail.below, 0)
        tail = econ.tail_summary(self.table_report(), 3, 25000)
        self.assertEqual(tail.below, 6)
        self.assertAlmostEqual(tail.below_fraction, 6 / 13.)

    def test_single_family(self):
        report = econ.market_summary([impact("F", 10)])
        self.assertEqual(report.families[0].share, 1.)

    def test_zero_market(self):
        report = econ.market_summary([impact("F", 0), impact("G", 0), impact("H", 0)])
        self.assertEqual([f.family for f in report.families], ["F", "G", "H"])
        self.assertAlmostEqual(report.families[0].share, 1 / 3.)

    def test_no_families(self):
        with self.assertRaises(InputError):
            econ.market_summary([])

    def test_impact_table(self):
        report = econ.market_summary([impact("F", "1000.49", sat(2.005)), impact("G", "3000.50", sat(1))])
        f = io.StringIO()
        econ.write_impact_table(report, f)
        self.assertEqual(f.getvalue().splitlines(), ["family,addresses,btc,usd", "G,1,1.00,3000", "F,1,2.00,1000"])


if __name__ == "__main__":
    unittest.main()
