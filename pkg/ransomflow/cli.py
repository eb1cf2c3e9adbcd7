"""
Command line interface.

Usage::

    ransomflow report -c run.ini [--plot] [--json]
    ransomflow synth --out testbed [--seed 0] [--spec spec.ini]

Subcommands ``ingest``, ``cluster``, ``expand``, ``flows``, ``econ`` run the
pipeline up to that stage and write its reports; ``report`` runs everything.

The run configuration is an ini file::

    [paths]
    ledger = ledger.jsonl
    seeds = seeds.csv
    tags = tags.csv
    rates = rates.csv
    output = report

    [analysis]
    indegree_mode = distinct_sources
    bucket = month
    interpolate_rates = no

    [Locky]
    start = "2016-02"

Relative paths are resolved against the directory of the ini file. Every
section other than ``paths`` and ``analysis`` is a family. Command line
flags override the file.

Exit codes: 0 success, 1 input error, 2 invariant violation, 3 missing rate.
"""

from __future__ import absolute_import, print_function, division

import argparse
import json
import os
import sys
from collections import namedtuple, OrderedDict
from configparser import ConfigParser, Error as ConfigError

import ransomflow
from ransomflow import conf
from ransomflow.conf import InputError, InvariantError, MissingRateError, INDEGREE_MODES, BUCKETS

#: run configuration of the command line tool
RunConfig = namedtuple("RunConfig", ["ledger", "seeds", "tags", "rates", "output", "start_dates",
                                     "indegree_mode", "bucket", "interpolate_rates"])

#: exit codes
EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INVARIANT = 2
EXIT_RATE = 3

_PATHS = ("ledger", "seeds", "tags", "rates", "output")

def load_run_config(path = None, **overrides):
    """Reads a run configuration file and applies overrides.

    Parameters
    ----------
    path : str, optional
        Ini file name. If None, everything comes from `overrides`.
    overrides : dict
        RunConfig fields; None values are ignored.

    Returns
    -------
    config : RunConfig
    """
    from ransomflow.campaign import parse_month
    values = dict(ledger = None, seeds = None, tags = None, rates = None, output = "report",
                  start_dates = OrderedDict(), indegree_mode = None, bucket = None, interpolate_rates = None)
    if path is not None:
        parser = ConfigParser()
        try:
            if not parser.read(path, encoding = "utf-8"):
                raise InputError("Could not read run configuration {}".format(path))
        except ConfigError as e:
            raise InputError("{0}: {1}".format(path, e))
        base = os.path.dirname(os.path.abspath(path))
        for key in _PATHS:
            value = parser.get("paths", key, fallback = None)
            if value is not None and value.strip():
                values[key] = os.path.join(base, conf._unquote(value))
        if parser.has_section("analysis"):
            values["indegree_mode"] = conf._unquote(parser.get("analysis", "indegree_mode", fallback = None))
            values["bucket"] = conf._unquote(parser.get("analysis", "bucket", fallback = None))
            try:
                values["interpolate_rates"] = parser.getboolean("analysis", "interpolate_rates", fallback = None)
            except ValueError as e:
                raise InputError("{0}: {1}".format(path, e))
        for section in parser.sections():
            if section in ("paths", "analysis"):
                continue
            start = parser.get(section, "start", fallback = None)
            values["start_dates"][section] = None if start is None else conf._unquote(start)
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    for family, start in values["start_dates"].items():
        if start is not None:
            parse_month(start)
    if values["indegree_mode"] is not None and values["indegree_mode"] not in INDEGREE_MODES:
        raise InputError("Invalid indegree_mode '{}'".format(values["indegree_mode"]))
    if values["bucket"] is not None and values["bucket"] not in BUCKETS:
        raise InputError("Invalid bucket '{}'".format(values["bucket"]))
    if values["ledger"] is None:
        raise InputError("No ledger file given")
    for key in ("ledger", "seeds", "tags"):
        if values[key] is not None and not os.path.exists(values[key]):
            raise InputError("{0} file {1} does not exist".format(key.capitalize(), values[key]))
    return RunConfig(**values)

def _common_arguments(parser):
    parser.add_argument("-c", "--config", help = "run configuration ini file")
    parser.add_argument("--ledger", help = "ledger file (jsonl)")
    parser.add_argument("--seeds", help = "seed CSV file")
    parser.add_argument("--tags", help = "tag CSV file")
    parser.add_argument("--rates", help = "rates CSV file")
    parser.add_argument("-o", "--output", help = "output directory")
    parser.add_argument("--indegree-mode", choices = INDEGREE_MODES, help = "key address indegree mode")
    parser.add_argument("--bucket", choices = BUCKETS, help = "time series bucket size")
    parser.add_argument("--interpolate-rates", action = "store_true", default = None,
                        help = "linearly interpolate missing daily rates")
    parser.add_argument("--no-cache", action = "store_true", help = "do not use the stage cache")
    parser.add_argument("--threads", type = int, help = "number of per-family worker threads")
    parser.add_argument("--json", action = "store_true", help = "print the summary as JSON to stdout")
    parser.add_argument("-v", "--verbose", action = "count", default = None, help = "increase verbosity")

def build_parser():
    parser = argparse.ArgumentParser(prog = "ransomflow",
                                     description = "Ransomware payment flow analysis of a normalized ledger.")
    parser.add_argument("--version", action = "version", version = ransomflow.__version__)
    sub = parser.add_subparsers(dest = "command")
    for name, text in (("ingest", "validate and index the ledger"),
                       ("cluster", "compute the co-spend partition and tag attribution"),
                       ("expand", "expand and time filter family seeds"),
                       ("flows", "find key addresses, exit points and family links"),
                       ("econ", "compute payments and financial impact"),
                       ("report", "run all stages")):
        p = sub.add_parser(name, help = text)
        _common_arguments(p)
        if name == "ingest":
            p.add_argument("--dump-index", action = "store_true", help = "write the address index CSV")
        if name in ("flows", "report"):
            p.add_argument("--dump-edges", action = "store_true", help = "write address and cluster edge CSVs")
        if name == "report":
            p.add_argument("--plot", action = "store_true", help = "write PNG figures")
            p.add_argument("--truth", help = "testbed truth.json to evaluate against")
    p = sub.add_parser("synth", help = "generate a synthetic testbed")
    p.add_argument("--seed", type = int, default = 0, help = "random generator seed")
    p.add_argument("--spec", help = "testbed spec ini file (built-in demo if omitted)")
    p.add_argument("-o", "--output", "--out", default = "testbed", help = "output directory")
    p.add_argument("--json", action = "store_true", help = "print the ground truth summary as JSON")
    p.add_argument("-v", "--verbose", action = "count", default = None, help = "increase verbosity")
    return parser

def _error(message):
    print("ransomflow: error: {}".format(message), file = sys.stderr)

def _synth(args):
    from ransomflow import testbed
    spec = testbed.load_spec(args.spec) if args.spec else testbed.default_spec()
    truth = testbed.generate(spec, args.seed, args.output)
    if args.json:
        data = OrderedDict((f, OrderedDict((("payment_addresses", len(t.payment_addresses)),
                                            ("collectors", len(t.collectors)),
                                            ("ransom_sat", t.ransom_sat))))
                           for f, t in truth.items())
        print(json.dumps(data, indent = 1, sort_keys = True))
    return EXIT_OK

def _run(args):
    from ransomflow import pipeline
    config = load_run_config(args.config, ledger = args.ledger, seeds = args.seeds, tags = args.tags,
                             rates = args.rates, output = args.output,
                             indegree_mode = args.indegree_mode, bucket = args.bucket,
                             interpolate_rates = args.interpolate_rates)
    analysis = pipeline.analyze(config, upto = args.command, nthreads = args.threads,
                                cache = False if args.no_cache else None)
    plot = getattr(args, "plot", False)
    if plot:
        import matplotlib
        matplotlib.use("Agg")
    pipeline.write_reports(analysis, dump_index = getattr(args, "dump_index", False),
                           dump_edges = getattr(args, "dump_edges", False), plot = plot)
    if getattr(args, "truth", None):
        from ransomflow import testbed
        scores = testbed.evaluate(analysis.family_results(), testbed.load_truth(args.truth))
        with open(os.path.join(config.output, "evaluation.json"), "w", newline = "\n", encoding = "utf-8") as f:
            json.dump(OrderedDict((f_, OrderedDict((k, v._asdict() if hasattr(v, "_asdict") else v)
                                                   for k, v in s.items())) for f_, s in scores.items()),
                      f, indent = 1, sort_keys = True)
            f.write("\n")
    if args.json:
        if analysis.report is not None:
            data = pipeline.summary_dict(analysis)
        else:
            from ransomflow.ledger import summary
            data = summary(analysis.store)
        print(json.dumps(data, indent = 1, sort_keys = True))
    return EXIT_OK

def main(argv = None):
    """Runs the command line tool and returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INPUT
    if args.verbose is not None:
        conf.set_verbose(args.verbose)
    try:
        if args.command == "synth":
            return _synth(args)
        return _run(args)
    except MissingRateError as e:
        _error(e)
        return EXIT_RATE
    except InvariantError as e:
        _error(e)
        return EXIT_INVARIANT
    except (InputError, OSError) as e:
        _error(e)
        return EXIT_INPUT
