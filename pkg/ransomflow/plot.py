"""
Figures of mean payments and longitudinal cumulative payments.
"""

from __future__ import absolute_import, print_function, division

import os

import matplotlib.pyplot as plt
import numpy as np

from ransomflow.print_tools import print1

def plot_mean_payments(means, fig = None, ax = None):
    """Bar chart of mean payment per family with standard error whiskers.

    Parameters
    ----------
    means : dict
        Family name -> (mean_usd, standard_error) or None. Families without
        payments are skipped, a missing standard error draws no whisker.
    fig : Figure, optional
        Figure to draw into.
    ax : Axes, optional
        Axes to draw into.

    Returns
    -------
    fig, ax
    """
    if fig is None:
        fig = plt.figure()
    if ax is None:
        ax = fig.add_subplot(111)
    items = [(f, m) for f, m in means.items() if m is not None]
    families = [f for f, m in items]
    values = np.array([m[0] for f, m in items])
    errors = np.array([np.nan if m[1] is None else m[1] for f, m in items])
    x = np.arange(len(families))
    ax.bar(x, values, yerr = np.nan_to_num(errors), capsize = 3)
    ax.set_xticks(x)
    ax.set_xticklabels(families, rotation = 45, ha = "right")
    ax.set_ylabel("Mean payment (USD)")
    fig.tight_layout()
    return fig, ax

def plot_cumulative(series, fig = None, ax = None):
    """Plots cumulative USD received per family over time.

    Parameters
    ----------
    series : dict
        Family name -> list of SeriesPoint.

    Returns
    -------
    fig, ax
    """
    if fig is None:
        fig = plt.figure()
    if ax is None:
        ax = fig.add_subplot(111)
    for family in sorted(series):
        points = series[family]
        if not points:
            continue
        t = np.array([p.bucket_start for p in points], "datetime64[D]")
        y = np.array([float(p.cumulative_usd) for p in points])
        ax.step(t, y, where = "post", label = family)
    ax.set_ylabel("Cumulative payments (USD)")
    ax.legend()
    fig.autofmt_xdate()
    return fig, ax

def save_plots(analysis, directory):
    """Saves mean payment and cumulative series figures as PNG files.

    Returns a list of written file names.
    """
    if not os.path.exists(directory):
        os.makedirs(directory)
    written = []
    for name, func, data in (("mean_payments.png", plot_mean_payments, analysis.means),
                             ("cumulative.png", plot_cumulative, analysis.series)):
        fig, ax = func(data)
        path = os.path.join(directory, name)
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
        print1("Saved {}".format(path))
    return written
