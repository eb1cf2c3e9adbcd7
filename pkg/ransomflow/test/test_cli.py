import contextlib
import csv
import io
import json
import os
import tempfile
import unittest

from ransomflow import cli, testbed
from ransomflow.conf import InputError
from ransomflow.test.ledgers import write_ledger, write_csv, T0

REPORTS = ("ledger_summary.json", "partition.csv", "orphan_tags.csv", "expansion.csv",
           "seed_drops.csv", "key_summary.csv", "key_addresses.csv", "exit_points.csv",
           "family_links.csv", "indegree_summary.json", "impact.csv", "series.csv",
           "payments.csv", "mean_payments.csv", "summary.json")


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(list(argv))
    return code, out.getvalue(), err.getvalue()


def read(path):
    with open(path, "rb") as f:
        return f.read()


class TestRunConfig(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        write_ledger(os.path.join(self.dir, "ledger.jsonl"), [("a", 1, T0, [], [("A", 1)])])
        self.ini = os.path.join(self.dir, "run.ini")

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        with open(self.ini, "w") as f:
            f.write(text)

    def test_relative_paths_and_families(self):
        self.write('[paths]\nledger = ledger.jsonl\noutput = out\n\n[analysis]\nbucket = week\n\n'
                   '[Locky]\nstart = "2016-02"\n\n[WannaCry]\n')
        config = cli.load_run_config(self.ini)
        self.assertEqual(config.ledger, os.path.join(self.dir, "ledger.jsonl"))
        self.assertEqual(config.output, os.path.join(self.dir, "out"))
        self.assertEqual(dict(config.start_dates), {"Locky" : "2016-02", "WannaCry" : None})
        self.assertEqual(config.bucket, "week")
        self.assertIsNone(config.indegree_mode)

    def test_overrides(self):
        self.write("[paths]\nledger = ledger.jsonl\n")
        config = cli.load_run_config(self.ini, bucket = "day", output = "elsewhere", seeds = None)
        self.assertEqual((config.bucket, config.output, config.seeds), ("day", "elsewhere", None))

    def test_errors(self):
        for text in ('[paths]\nledger = ledger.jsonl\n[Locky]\nstart = "Feb 2016"\n',
                     "[paths]\nledger = missing.jsonl\n",
                     "[paths]\nledger = ledger.jsonl\nseeds = missing.csv\n",
                     "[paths]\nledger = ledger.jsonl\n[analysis]\nbucket = year\n",
                     "[paths]\nseeds = x\n",
                     "not an ini file\n"):
            self.write(text)
            with self.assertRaises(InputError):
                cli.load_run_config(self.ini)


class TestMain(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def synth(self):
        code, out, err = run("synth", "--seed", "3", "--out", self.dir)
        self.assertEqual(code, 0)
        return os.path.join(self.dir, "run.ini")

    def test_report(self):
        ini = self.synth()
        code, out, err = run("report", "-c", ini, "--json", "--no-cache", "--dump-edges",
                             "--truth", os.path.join(self.dir, "truth.json"))
        self.assertEqual(code, 0, err)
        report = os.path.join(self.dir, "report")
        for name in REPORTS + ("address_edges.csv", "cluster_edges.csv", "evaluation.json"):
            self.assertTrue(os.path.exists(os.path.join(report, name)), name)
        summary = json.loads(out)
        self.assertEqual(sorted(f["family"] for f in summary["families"]), ["Alpha", "Beta", "Gamma"])
        self.assertAlmostEqual(sum(f["share"] for f in summary["families"]), 1., places = 9)
        with open(os.path.join(report, "impact.csv")) as f:
            rows = list(csv.DictReader(f))
        usd = [int(r["usd"]) for r in rows]
        self.assertEqual(usd, sorted(usd, reverse = True))
        with open(os.path.join(report, "evaluation.json")) as f:
            evaluation = json.load(f)
        for family, scores in evaluation.items():
            self.assertTrue(scores["total_exact"])
            self.assertEqual(scores["keys"], {"precision" : 1., "recall" : 1.})
        with open(os.path.join(report, "family_links.csv")) as f:
            self.assertEqual(f.read().splitlines()[1].split(",")[:2], ["Alpha", "Beta"])

    def test_report_is_deterministic_and_cached(self):
        ini = self.synth()
        self.assertEqual(run("report", "-c", ini)[0], 0)
        report = os.path.join(self.dir, "report")
        first = {name : read(os.path.join(report, name)) for name in REPORTS}
        self.assertTrue(os.listdir(os.path.join(report, ".cache")))
        self.assertEqual(run("report", "-c", ini, "--threads", "1")[0], 0)
        for name in REPORTS:
            self.assertEqual(read(os.path.join(report, name)), first[name], name)

    def test_partial_stages(self):
        ini = self.synth()
        code, out, err = run("ingest", "-c", ini, "--dump-index", "--json", "--no-cache")
        self.assertEqual(code, 0)
        self.assertIn("transactions", json.loads(out))
        report = os.path.join(self.dir, "report")
        self.assertTrue(os.path.exists(os.path.join(report, "address_index.csv")))
        self.assertFalse(os.path.exists(os.path.join(report, "partition.csv")))
        self.assertEqual(run("expand", "-c", ini, "--no-cache")[0], 0)
        self.assertTrue(os.path.exists(os.path.join(report, "expansion.csv")))
        self.assertFalse(os.path.exists(os.path.join(report, "key_summary.csv")))

    def test_missing_rates(self):
        ini = self.synth()
        os.remove(os.path.join(self.dir, "rates.csv"))
        code, out, err = run("report", "-c", ini, "--no-cache")
        self.assertEqual(code, 3)
        self.assertIn("No BTC/USD closing rate", err)

    def test_rates_gap(self):
        ini = self.synth()
        path = os.path.join(self.dir, "rates.csv")
        with open(path) as f:
            lines = f.read().splitlines()
        #drop every day but the first and the last
        with open(path, "w") as f:
            f.write("\n".join([lines[0], lines[1], lines[-1]]) + "\n")
        self.assertEqual(run("report", "-c", ini, "--no-cache")[0], 3)
        self.assertEqual(run("report", "-c", ini, "--no-cache", "--interpolate-rates")[0], 0)

    def test_input_error(self):
        write_ledger(os.path.join(self.dir, "ledger.jsonl"), [("a", 1, T0, [], [("A", 1)]),
                                                             ("a", 2, T0, [], [("B", 1)])])
        code, out, err = run("ingest", "--ledger", os.path.join(self.dir, "ledger.jsonl"), "--no-cache",
                             "-o", os.path.join(self.dir, "out"))
        self.assertEqual(code, 1)
        self.assertIn("duplicate txid", err)

    def test_invariant_error(self):
        write_ledger(os.path.join(self.dir, "ledger.jsonl"), [("a", 1, T0, [("A", 1)], [("B", 2)])])
        code, out, err = run("cluster", "--ledger", os.path.join(self.dir, "ledger.jsonl"), "--no-cache",
                             "-o", os.path.join(self.dir, "out"))
        self.assertEqual(code, 2)

    def test_seeds_required(self):
        write_ledger(os.path.join(self.dir, "ledger.jsonl"), [("a", 1, T0, [], [("A", 1)])])
        code, out, err = run("expand", "--ledger", os.path.join(self.dir, "ledger.jsonl"), "--no-cache",
                             "-o", os.path.join(self.dir, "out"))
        self.assertEqual(code, 1)

    def test_family_without_seeds(self):
        ini = self.synth()
        with open(ini, "a") as f:
            f.write('\n[Delta]\nstart = "2016-02"\n')
        self.assertEqual(run("expand", "-c", ini, "--no-cache")[0], 1)

    def test_plots(self):
        ini = self.synth()
        self.assertEqual(run("report", "-c", ini, "--plot", "--no-cache")[0], 0)
        for name in ("mean_payments.png", "cumulative.png"):
            self.assertTrue(os.path.getsize(os.path.join(self.dir, "report", "plots", name)) > 0)

    def test_no_command(self):
        self.assertEqual(run()[0], 1)

    def test_synth_spec(self):
        spec = os.path.join(self.dir, "spec.ini")
        with open(spec, "w") as f:
            f.write("[Locky]\nn_victims = 5\nn_collectors = 1\nfan_in = 10\n")
        code, out, err = run("synth", "--spec", spec, "--out", os.path.join(self.dir, "x"))
        self.assertEqual(code, 1)
        self.assertIn("exceeds", err)

    def test_synth_json(self):
        code, out, err = run("synth", "--out", self.dir, "--json")
        self.assertEqual(code, 0)
        truth = testbed.load_truth(os.path.join(self.dir, "truth.json"))
        self.assertEqual(json.loads(out)["Alpha"]["ransom_sat"], truth["Alpha"].ransom_sat)


if __name__ == "__main__":
    unittest.main()
