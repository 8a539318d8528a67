"""Symbol calculus of pseudodifferential operators on periodic manifolds.

Specs (manifolds, symbols, perturbations, configs) are plain dicts in the same
JSON schema as the pdocalc configs; they are serialised on the way in.
"""

import json as _json

from . import _core
from ._core import (ConfigInvalid, Expansion, Manifold, MetricModel, PdoError, PTable, adjoint_symbol,
                    change_tau, compose_flat, compose_global, p_table)

__version__ = _core.__version__


def _dump(spec):
    return spec if isinstance(spec, str) else _json.dumps(spec)


def manifold(spec):
    return Manifold.from_json(_dump(spec))


def metric_model(spec):
    return MetricModel.from_json(_dump(spec))


def symbol(terms, dim=1, period=None):
    return Expansion.from_json(_dump(terms), dim, period)


def sqrt_symbol(metric, nu=0, K=3):
    """Symbol of sqrt(-Laplacian + nu) to depth K."""
    return _core.sqrt_symbol(metric, _dump(nu), K)


def commands():
    return dict(_core.commands())


def acceptance_criteria():
    return dict(_core.acceptance_criteria())


def run(command, config=None):
    """Runs a pdocalc command; returns its JSON summary as a dict."""
    return _json.loads(_core.run_command(command, _dump(config or {})))
