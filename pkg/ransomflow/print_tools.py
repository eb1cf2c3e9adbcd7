"""Message printing functions. ransomflow uses ransomflow.conf.RFConfig.verbose
variable to define verbosity level and behavior of printing functions.

verbosity levels 1 and 2 enable printing, 0 disables printing messages.
Messages are written to stderr, so that reports written to stdout are never
mixed with log lines.
 """

from __future__ import absolute_import, print_function, division
import sys
import time
import ransomflow.conf

def print1(*args, **kwargs):
    """prints level 1 messages"""
    if ransomflow.conf.RFConfig.verbose >= 1:
        kwargs.setdefault("file", sys.stderr)
        print(*args,**kwargs)

def print2(*args,**kwargs):
    """prints level 2 messages"""
    if ransomflow.conf.RFConfig.verbose >= 2:
        kwargs.setdefault("file", sys.stderr)
        print(*args,**kwargs)

def print_progress (iteration, total, prefix = '', suffix = '', decimals = 1, length = 50, fill = '='):
    """
    Call in a loop to create terminal progress bar
    """
    if ransomflow.conf.RFConfig.verbose >= 1 and total > 0:
        percent = ("{0:." + str(decimals) + "f}").format(100 * (iteration / float(total)))
        filledLength = int(length * iteration // total)
        bar = fill * filledLength + '-' * (length - filledLength)
        print('\r%s |%s| %s%% %s' % (prefix, bar, percent, suffix), end = '\r', file = sys.stderr)
        # Print New Line on Complete
        if iteration == total:
            print(file = sys.stderr)

def print_rate(n_items, t0, t1 = None, message = "... processed", unit = "transactions"):
    """Prints calculated processing rate"""
    if ransomflow.conf.RFConfig.verbose >= 2:
        if t1 is None:
            t1 = time.time()#take current time
        dt = max(t1-t0, 1e-9)
        print (message + " {0} {1} with an average rate {2:.2f}/s".format(n_items, unit, n_items/dt), file = sys.stderr)

def disable_prints():
    """Disable message printing. Returns previous verbosity level"""
    #set verbosity to negative value
    value = ransomflow.conf.RFConfig.verbose
    ransomflow.conf.RFConfig.verbose = - abs(value)
    return value

def enable_prints(level = None):
    """Enable message printing. Returns previous verbosity level"""
    #set verbosity to positve value
    value = ransomflow.conf.RFConfig.verbose
    if level is None:
        ransomflow.conf.RFConfig.verbose = abs(value)
    else:
        ransomflow.conf.RFConfig.verbose = abs(int(level))
    return value
