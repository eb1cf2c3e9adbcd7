# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/stable/config

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

from ransomflow import __version__

# -- Project information -----------------------------------------------------

project = 'ransomflow'
copyright = '2026, ransomflow developers'
author = 'ransomflow developers'

# The short X.Y version
version = '.'.join(__version__.split('.')[:2])
# The full version, including alpha/beta/rc tags
release = __version__

numfig = True

# -- General configuration ---------------------------------------------------

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.githubpages',
              'sphinx.ext.napoleon',
              'sphinx.ext.doctest',
              'autoapi.extension',
    ]

autoapi_keep_files = False
napoleon_numpy_docstring = True

autoapi_dirs = ['../ransomflow']
autoapi_options = ['members', 'show-inheritance']
autoapi_ignore = ["*/test/*.py","*/test"]

doctest_global_setup = '''
import ransomflow
ransomflow.conf.set_verbose(0)
'''

# Add any paths that contain templates here, relative to this directory.
templates_path = ['_templates']

# The suffix(es) of source filenames.
source_suffix = '.rst'

# The master toctree document.
master_doc = 'index'

# The language for content autogenerated by Sphinx.
language = None

# List of patterns, relative to source directory, that match files and
# directories to ignore when looking for source files.
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

# The name of the Pygments (syntax highlighting) style to use.
pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'default'
#html_theme = 'alabaster'

html_static_path = []

# -- Options for HTMLHelp output ---------------------------------------------

# Output file base name for HTML help builder.
htmlhelp_basename = 'ransomflowdoc'
