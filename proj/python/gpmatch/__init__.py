"""Gaussian-process matching for average treatment effects."""

import csv
import io
import json

import numpy as np

from . import _core
from ._core import ConfigError, DataError, NumericalError, SCHEMA_VERSION

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "SCHEMA_VERSION",
    "analyze",
    "diagnose",
    "generate",
    "matched",
    "simulate",
    "weighted_sum_estimate",
]


def _vec(v):
    return np.ascontiguousarray(v, dtype=float).reshape(-1)


def _mat(m, n):
    if m is None:
        return np.zeros((n, 0))
    m = np.asarray(m, dtype=float)
    return m.reshape(n, -1) if m.ndim == 1 else m


def analyze(y, a, x=None, v=None, *, seed, mean_terms="treatment_only", interactions=True,
            n_burnin=5000, n_keep=5000, omega=1e6):
    """Fit the model; returns the ATE summary, diagnostics and raw draws."""
    y, a = _vec(y), _vec(a)
    x = _mat(x, y.size)
    out = _core.analyze(y, a, x, None if v is None else _mat(v, y.size), seed=seed,
                        mean_terms=mean_terms, interactions=interactions,
                        n_burnin=n_burnin, n_keep=n_keep, omega=omega)
    out["summary"] = json.loads(out["summary"])
    out["diagnostics"] = json.loads(out["diagnostics"])
    return out


def matched(y, a, blocks, sigma02):
    return json.loads(_core.matched(_vec(y), _vec(a), [int(b) for b in blocks], float(sigma02)))


def diagnose(y, a, v, *, sigma_f2, phi, sigma_02, tau=None, standardize=True, normalize=True):
    y, a = _vec(y), _vec(a)
    return json.loads(_core.diagnose(y, a, _mat(v, y.size), sigma_f2=sigma_f2, phi=_vec(phi),
                                     sigma_02=sigma_02, tau=tau, standardize=standardize,
                                     normalize=normalize))


def simulate(study, *, n, seed, setting=1, replicates=None, desk_scale=False, estimators=(),
             n_burnin=None, n_keep=None, threads=0):
    """Run a simulation study; returns (metrics dict, list of replicate rows)."""
    out = _core.simulate(study, n=n, seed=seed, setting=setting, replicates=replicates,
                         desk_scale=desk_scale, estimators=list(estimators), n_burnin=n_burnin,
                         n_keep=n_keep, threads=threads)
    rows = list(csv.DictReader(io.StringIO(out["replicates_csv"])))
    return json.loads(out["metrics"]), rows


generate = _core.generate
weighted_sum_estimate = _core.weighted_sum_estimate
