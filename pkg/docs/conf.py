# Sphinx configuration of the fracvar documentation.
import os
import sys

sys.path.insert(0, os.path.abspath("../src"))

project = "Fractional calculus of variations"
copyright = "2026, fracvar developers"
author = "fracvar developers"
release = "0.1.0"

extensions = [
    "myst_parser",
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
]

# Markdown pages next to the module .rst files
source_suffix = [".rst", ".md"]

# NumPy style docstrings only
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_include_init_with_doc = False
napoleon_include_private_with_doc = False
napoleon_use_param = True
napoleon_use_rtype = True
napoleon_attr_annotations = True

autodoc_member_order = "bysource"

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

html_theme = "sphinx_rtd_theme"
html_static_path = ["_static"]
