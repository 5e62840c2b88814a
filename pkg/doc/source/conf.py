# Configuration file for the Sphinx documentation builder.
#
# This file does only contain a selection of the most common options. For a
# full list see the documentation:
# http://www.sphinx-doc.org/en/master/config

# -- Path setup --------------------------------------------------------------

import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join('..', '..', 'src')))

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
]

templates_path = ['.templates']
source_suffix = '.rst'
master_doc = 'index'

# -- Project information -----------------------------------------------------

project = 'st-stickbreaking'
copyright = '2026, st-stickbreaking developers'
author = 'st-stickbreaking developers'

from st_stickbreaking import __version__  # noqa: E402

version = __version__
release = version

language = None
exclude_patterns = []
add_module_names = False
pygments_style = 'sphinx'
modindex_common_prefix = ['st_stickbreaking.']
todo_include_todos = False

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'StStickbreakingdoc'

# -- Options for manual page output ------------------------------------------

man_pages = [
    (master_doc, 'stsb', project + ' Documentation', [author], 1)
]

# -- Extension configuration -------------------------------------------------

autodoc_member_order = 'bysource'
