"""
Configuration and constants
===========================

ransomflow configuration functions, constants and exception classes.

"""

from __future__ import absolute_import, print_function, division

import os, warnings, shutil

from configparser import ConfigParser

import numpy as np

def warning(message):
    warnings.warn(message, UserWarning, stacklevel=2)

class InputError(ValueError):
    """Raised on malformed or inconsistent input data."""
    pass

class InvariantError(ValueError):
    """Raised when a ledger or pipeline invariant is violated."""
    pass

class MissingRateError(InputError):
    """Raised when there is no closing price for a required UTC date.

    The `date` attribute holds the first uncovered date as an ISO string.
    """
    def __init__(self, date, message = None):
        self.date = date
        if message is None:
            message = "No BTC/USD closing rate for {}".format(date)
        super(MissingRateError, self).__init__(message)

DATAPATH = os.path.dirname(__file__)

#: number of satoshi in one bitcoin
COIN = 100000000
#: seconds in one UTC day
DAY = 86400

#: valid indegree modes
INDEGREE_MODES = ("distinct_sources", "distinct_txs")
#: valid time series bucket sizes
BUCKETS = ("day", "week", "month")

I64DTYPE = np.dtype("int64")
F64DTYPE = np.dtype("float64")

def read_environ_variable(name, default):
    try:
        return int(os.environ.get(name, default))
    except ValueError:
        warnings.warn("Environment variable {0:s} was found, but its value is not valid!".format(name))
        return int(default)

def get_home_dir():
    """
    Return user home directory
    """
    try:
        path = os.path.expanduser('~')
    except:
        path = ''
    for env_var in ('HOME', 'USERPROFILE', 'TMP'):
        if os.path.isdir(path):
            break
        path = os.environ.get(env_var, '')
    if path:
        return path
    else:
        raise RuntimeError('Please define environment variable $HOME')

#: home directory
HOMEDIR = get_home_dir()

RANSOMFLOW_CONFIG_DIR = os.path.join(HOMEDIR, ".ransomflow")

CONF = os.path.join(RANSOMFLOW_CONFIG_DIR, "ransomflow.ini")
CONF_TEMPLATE = os.path.join(DATAPATH, "ransomflow.ini")

config = ConfigParser()

if not os.path.exists(CONF):
    try:
        if not os.path.exists(RANSOMFLOW_CONFIG_DIR):
            os.makedirs(RANSOMFLOW_CONFIG_DIR)
        shutil.copy(CONF_TEMPLATE, CONF)
    except:
        warnings.warn("Could not copy config file in user's home directory! Is it writeable?")
        CONF = CONF_TEMPLATE
config.read(CONF)

def _readconfig(func, section, name, default):
    try:
        return func(section, name)
    except:
        return default

def _unquote(value):
    """Strips optional quotes around ini string values."""
    if isinstance(value, str):
        return value.strip().strip('"').strip("'")
    return value

def detect_number_of_cores():
    """
    detect_number_of_cores()

    Detect the number of cores in this system.

    Returns
    -------
    out : int
        The number of cores in this system.

    """
    n = os.cpu_count()
    return n if n else 1

NUMBA_CACHE = False

if read_environ_variable("RANSOMFLOW_NUMBA_CACHE",
            default = _readconfig(config.getboolean, "numba", "cache", True)):
    NUMBA_CACHE = True

class RFConfig(object):
    """ransomflow settings are here. You should use the set_* functions in the
    conf.py module to set these values"""
    def __init__(self):
        self.verbose = read_environ_variable("RANSOMFLOW_VERBOSE",
                            default = _readconfig(config.getint, "core", "verbose", 0))
        if _readconfig(config.getboolean, "core", "cache", True):
            self.cache = 1
        else:
            self.cache = 0
        self.nthreads = _readconfig(config.getint, "core", "nthreads", detect_number_of_cores())
        self.numba_threads = 1

        mode = _unquote(_readconfig(config.get, "flows", "indegree_mode", "distinct_sources"))
        self.indegree_mode = mode if mode in INDEGREE_MODES else "distinct_sources"
        bucket = _unquote(_readconfig(config.get, "econ", "bucket", "month"))
        self.bucket = bucket if bucket in BUCKETS else "month"
        self.interpolate_rates = _readconfig(config.getboolean, "econ", "interpolate_rates", False)

    def __getitem__(self, item):
        return self.__dict__[item]

    def __repr__(self):
        return repr(self.__dict__)

#: a singleton holding user configuration
RFConfig = RFConfig()

def get_default_config_option(name, value = None):
    """Returns default config option specified with 'name', if value is not None,
    returns value instead"""
    return RFConfig[name] if value is None else value

#setter functions for RFConfig
def set_verbose(level):
    """Sets verbose level (0-2) used by compute functions."""
    out = RFConfig.verbose
    RFConfig.verbose = max(0,int(level))
    return out

def set_cache(level):
    """Sets stage cache level (0 disables the on-disk stage cache)."""
    out = RFConfig.cache
    level = max(int(level),0)
    if level > 1:
        warnings.warn("Cache levels higher than 1 not supported yet!")
    RFConfig.cache = level
    return out

def set_nthreads(n):
    """Sets number of worker threads used for per-family analysis."""
    out = RFConfig.nthreads
    RFConfig.nthreads = max(1, int(n))
    return out

def set_indegree_mode(mode):
    """Sets indegree mode, either 'distinct_sources' or 'distinct_txs'."""
    out = RFConfig.indegree_mode
    mode = str(mode)
    if mode not in INDEGREE_MODES:
        raise ValueError("Unsupported indegree mode '{}'".format(mode))
    RFConfig.indegree_mode = mode
    return out

def set_bucket(bucket):
    """Sets time series bucket size, one of 'day', 'week', 'month'."""
    out = RFConfig.bucket
    bucket = str(bucket)
    if bucket not in BUCKETS:
        raise ValueError("Unsupported bucket '{}'".format(bucket))
    RFConfig.bucket = bucket
    return out

def set_interpolate_rates(ok):
    """Enables or disables linear interpolation of missing daily rates."""
    out = RFConfig.interpolate_rates
    RFConfig.interpolate_rates = bool(ok)
    return out

import numba

def set_numba_threads(n):
    """Sets number of threads used in numba-accelerated functions."""
    out = RFConfig.numba_threads
    numba.set_num_threads(n)
    n = numba.get_num_threads()
    RFConfig.numba_threads = int(n)
    return out

try:
    set_numba_threads(_readconfig(config.getint, "numba", "nthreads", detect_number_of_cores()))
except:
    #in case something wents wrong, we do not want ransomflow to fail loading.
    warnings.warn("Could not set numba threads", UserWarning)
