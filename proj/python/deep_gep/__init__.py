"""Deep Gaussian equivalence experiments.

Specs are plain dicts with the same keys as the CLI's spec.json files.
"""

import json

from . import _core
from ._core import NumericError, SpecError

__all__ = [
    "SpecError",
    "NumericError",
    "normalize_spec",
    "coefficients",
    "reduce",
    "psi_constant",
    "sample_dataset",
    "log_z",
    "mutual_information",
    "gen_error",
    "orthogonality",
    "psi_gap",
    "channel_ks",
]


def _text(spec):
    return spec if isinstance(spec, str) else json.dumps(spec)


def normalize_spec(spec):
    return json.loads(_core.normalize_spec(_text(spec)))


def coefficients(spec):
    return json.loads(_core.coefficients(_text(spec)))


def reduce(spec):
    """Returns (glm_spec, trail)."""
    glm, trail = _core.reduce(_text(spec))
    return json.loads(glm), json.loads(trail)


def psi_constant(m, spec):
    return _core.psi_constant(m, _text(spec))


def sample_dataset(spec, n, seed):
    return _core.sample_dataset(_text(spec), n, seed)


def log_z(spec, X0, Y, seed, n_prior_samples=20000, threads=1):
    """Returns (log Z, std_err)."""
    return _core.log_z(_text(spec), X0, Y, seed, n_prior_samples, threads)


def mutual_information(spec, n, seed, n_instances=50, n_prior_samples=20000, threads=1):
    """Returns (I / n, std_err)."""
    return _core.mutual_information(_text(spec), n, seed, n_instances, n_prior_samples, threads)


def gen_error(spec, n, seed, n_instances=20, n_test=16, n_steps=10000, burn_in=2000, threads=1):
    return _core.gen_error(_text(spec), n, seed, n_instances, n_test, n_steps, burn_in, threads)


def orthogonality(spec, sizes, seed, k=2, n_mc=2000, threads=1):
    return _core.orthogonality(_text(spec), list(sizes), k, n_mc, seed, threads)


def psi_gap(spec, sizes, seed, n_mc=20000, threads=1):
    return _core.psi_gap(_text(spec), list(sizes), n_mc, seed, threads)


def channel_ks(spec, d, n_samples, seed, full_forward=False):
    return _core.channel_ks(_text(spec), d, n_samples, seed, full_forward)
