#  Copyright (C) 2026 st-stickbreaking developers
#
#  This program is free software; you can redistribute it and/or
#  modify it under the terms of the GNU Lesser General Public
#  License as published by the Free Software Foundation; either
#  version 2 of the License, or (at your option) any later version.
#
#  This library is distributed in the hope that it will be useful,
#  but WITHOUT ANY WARRANTY; without even the implied warranty of
#  MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the GNU
#  Lesser General Public License for more details.
#
#  You should have received a copy of the GNU Lesser General Public
#  License along with this library. If not, see <http://www.gnu.org/licenses/>.

"""
io - file formats
=================

Every file is plain text and every write is atomic.

Datasets
  CSV with header ``s1,s2,t,y`` followed by any covariate columns. ``t``
  is a positive integer; an empty ``y`` marks a prediction target.

Predictions
  CSV ``s1,s2,t,mean,sd,q05,q50,q95``.

Traces
  Long-format CSV ``iter,param,value``, one row per parameter and kept
  iteration. Indexed parameters are written ``name[k]`` (1-based) and
  path values ``theta[k,j]``; the varying-atoms field points are stored
  once with ``iter`` 0.

Configuration
  ``key=value`` lines, ``#`` comments. Keys are the fields of
  :class:`HyperPriors` and :class:`McmcConfig`; intervals are written
  ``lo,hi``.

Manifests
  ``key=value`` lines describing one command run: the command, the
  package version, seed, duration, configuration, data domain and the
  sha256 digests of the files written.

Floats are written with 17 significant digits.
"""

import csv
from dataclasses import dataclass, field, fields
import logging
import os
import re
import time
from typing import Optional

import numpy as np

from ._exceptions import (
    BadValue,
    MissingColumn,
    ParseError,
    UnknownKey,
)
from ._utils import save_file_atomic, sha256sum
from .core import (
    ConfigValueError,
    Dataset,
    HyperPriors,
    McmcConfig,
    Observation,
    SpaceTimeDomain,
    SpaceTimePoint,
    validate_dataset,
)
from .kernels import KernelKind
from .mcmc import ChainTrace
from .predict_eval import PredictionResult

LOGGER = logging.getLogger(__name__)

DATASET_COLUMNS = ("s1", "s2", "t", "y")
PREDICTION_COLUMNS = ("s1", "s2", "t", "mean", "sd", "q05", "q50", "q95")
TRACE_COLUMNS = ("iter", "param", "value")

_PARAM = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)(?:,(\d+))?\])?$")


def fmt(value):
    """Format a float with 17 significant digits."""
    return "%.17g" % value


def _writer(f):
    return csv.writer(f, lineterminator="\n")


def _header(reader, required, path):
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError(1, "{}: empty file".format(path)) from None
    for name in required:
        if name not in header:
            raise MissingColumn(name)
    return header


def _float(text, line, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            line, "column '{}': not a number: {!r}".format(column, text)
        ) from None


def _int(text, line, column):
    try:
        return int(text)
    except ValueError:
        raise ParseError(
            line, "column '{}': not an integer: {!r}".format(column, text)
        ) from None


# load_csv():
#
# Load and validate a dataset.
#
# Args:
#    path (str): The CSV file
#    domain (SpaceTimeDomain): Explicit domain, inferred when omitted
#
# Raises:
#    (MissingColumn): A required column is absent
#    (ParseError): A row does not parse; lines count the header as 1
#    (DatasetError): The rows do not form a valid dataset
#
# Returns:
#    (Dataset): The validated dataset
#
def load_csv(path, domain=None):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = _header(reader, DATASET_COLUMNS, path)
        pos = {name: header.index(name) for name in DATASET_COLUMNS}
        x_cols = [
            j for j, name in enumerate(header) if name not in DATASET_COLUMNS
        ]
        observations = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    line,
                    "expected {} fields, got {}".format(len(header), len(row)),
                )
            s1 = _float(row[pos["s1"]], line, "s1")
            s2 = _float(row[pos["s2"]], line, "s2")
            t = _int(row[pos["t"]].strip(), line, "t")
            if t < 1:
                raise ParseError(line, "column 't': must be >= 1")
            y_text = row[pos["y"]].strip()
            missing = y_text == ""
            y = float("nan") if missing else _float(y_text, line, "y")
            x = None
            if x_cols:
                x = tuple(_float(row[j], line, header[j]) for j in x_cols)
            observations.append(
                Observation(SpaceTimePoint(s1, s2, t), y, x, missing)
            )
    dataset = validate_dataset(Dataset(tuple(observations), domain))
    LOGGER.info(
        "Loaded %d observations (%d targets) from %s",
        dataset.n,
        int(np.sum(~dataset.observed)),
        path,
    )
    return dataset


def write_dataset_csv(path, dataset):
    """Write a dataset in the canonical CSV form."""
    with save_file_atomic(path, newline="") as f:
        writer = _writer(f)
        writer.writerow(
            list(DATASET_COLUMNS)
            + ["x{}".format(j + 1) for j in range(dataset.p)]
        )
        for obs in dataset.observations:
            p = obs.point
            row = [fmt(p.s1), fmt(p.s2), str(int(p.t))]
            row.append("" if obs.missing else fmt(obs.y))
            if obs.x is not None:
                row.extend(fmt(v) for v in obs.x)
            writer.writerow(row)


def write_table(path, header, rows):
    """Write rows of numbers (floats at 17 digits) under a header."""
    with save_file_atomic(path, newline="") as f:
        writer = _writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    str(v)
                    if isinstance(v, (int, np.integer, str))
                    else fmt(v)
                    for v in row
                ]
            )


def write_predictions(path, result):
    nan = np.full(len(result), np.nan)
    q05 = result.q05 if result.has_quantiles else nan
    q50 = result.q50 if result.has_quantiles else nan
    q95 = result.q95 if result.has_quantiles else nan
    write_table(
        path,
        PREDICTION_COLUMNS,
        (
            (p.s1, p.s2, int(p.t), m, s, a, b, c)
            for p, m, s, a, b, c in zip(
                result.points, result.mean, result.sd, q05, q50, q95
            )
        ),
    )


def read_predictions(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = _header(reader, PREDICTION_COLUMNS, path)
        pos = {name: header.index(name) for name in PREDICTION_COLUMNS}
        points, values = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            points.append(
                SpaceTimePoint(
                    _float(row[pos["s1"]], line, "s1"),
                    _float(row[pos["s2"]], line, "s2"),
                    _int(row[pos["t"]], line, "t"),
                )
            )
            values.append(
                [
                    _float(row[pos[name]], line, name)
                    for name in PREDICTION_COLUMNS[3:]
                ]
            )
    values = np.array(values, dtype=float).reshape(-1, 5)
    return PredictionResult(
        points,
        values[:, 0],
        values[:, 1],
        values[:, 2],
        values[:, 3],
        values[:, 4],
    )


#
# Configuration
#
def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, KernelKind):
        return str(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected a boolean")


# Convert text to the type of a field's default value
def _coerce(default, text):
    text = text.strip()
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, KernelKind):
        return KernelKind.from_name(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != len(default):
            raise ValueError("expected {} values".format(len(default)))
        return tuple(float(p) for p in parts)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if default is None:
        return None if text.lower() in ("", "none") else int(text)
    return text


def config_items(hyper, config):
    """Every configuration key and its formatted value, hyperpriors first."""
    return [
        (f.name, _format_value(getattr(obj, f.name)))
        for obj in (hyper, config)
        for f in fields(obj)
    ]


# config_from_pairs():
#
# Build configuration objects from (key, text) pairs on top of defaults.
#
# Args:
#    pairs (iterable): (key, text, line) triples; line may be None
#    hyper (HyperPriors): Base hyperpriors, defaults when omitted
#    config (McmcConfig): Base settings, defaults when omitted
#
# Raises:
#    (UnknownKey): A key names no field
#    (BadValue): A value does not parse or is out of range
#
# Returns:
#    (HyperPriors, McmcConfig): The configuration
#
def config_from_pairs(pairs, hyper=None, config=None):
    hyper = hyper or HyperPriors()
    config = config or McmcConfig()
    hyper_fields = {f.name: f for f in fields(HyperPriors)}
    config_fields = {f.name: f for f in fields(McmcConfig)}
    changes = ({}, {})
    texts = {}
    for key, text, _ in pairs:
        if key in hyper_fields:
            base, target = hyper, changes[0]
        elif key in config_fields:
            base, target = config, changes[1]
        else:
            raise UnknownKey(key)
        try:
            target[key] = _coerce(getattr(base, key), text)
        except ValueError as e:
            raise BadValue(key, text, str(e)) from e
        texts[key] = text

    try:
        hyper = hyper.__class__(**{**_as_dict(hyper), **changes[0]})
        config = config.__class__(**{**_as_dict(config), **changes[1]})
    except ConfigValueError as e:
        raise BadValue(e.key, texts.get(e.key), str(e)) from e
    return hyper, config


def _as_dict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as f:
        for line, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(line, "expected key=value")
            key, value = text.split("=", 1)
            pairs.append((key.strip(), value.strip(), line))
    return pairs


# parse_config():
#
# Read a configuration file. Every key is optional.
#
# Raises:
#    (ParseError): A line is not key=value
#    (UnknownKey): A key names no field
#    (BadValue): A value does not parse or is out of range
#
# Returns:
#    (HyperPriors, McmcConfig): The configuration
#
def parse_config(path):
    return config_from_pairs(_read_pairs(path))


#
# Run manifests
#
@dataclass
class RunManifest:
    # pylint: disable=too-many-instance-attributes

    command: str
    version: str
    seed: Optional[int] = None
    duration: float = 0.0
    config: dict = field(default_factory=dict)
    domain: Optional[SpaceTimeDomain] = None
    n_covariates: int = 0
    digests: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    started: float = field(default_factory=time.monotonic, repr=False)

    def set_config(self, hyper, config):
        self.config = dict(config_items(hyper, config))

    def configuration(self):
        """The (HyperPriors, McmcConfig) echoed in the manifest."""
        return config_from_pairs(
            (key, text, None) for key, text in self.config.items()
        )

    def add_output(self, path):
        self.digests[os.path.basename(path)] = sha256sum(path)

    def lines(self):
        out = [
            "command={}".format(self.command),
            "version={}".format(self.version),
            "seed={}".format(_format_value(self.seed)),
            "duration={:.3f}".format(self.duration),
        ]
        out += ["config.{}={}".format(k, v) for k, v in self.config.items()]
        if self.domain is not None:
            out += [
                "domain.s1_range=" + _format_value(self.domain.s1_range),
                "domain.s2_range=" + _format_value(self.domain.s2_range),
                "domain.t_max={}".format(self.domain.t_max),
            ]
        out.append("n_covariates={}".format(self.n_covariates))
        out += ["{}={}".format(k, v) for k, v in self.extra.items()]
        out += [
            "digest.{}={}".format(k, v)
            for k, v in sorted(self.digests.items())
        ]
        return out

    # write():
    #
    # Stamp the elapsed time and write the manifest atomically.
    #
    def write(self, path):
        self.duration = time.monotonic() - self.started
        with save_file_atomic(path) as f:
            f.write("\n".join(self.lines()) + "\n")


def read_manifest(path):
    values = {}
    for key, text, _ in _read_pairs(path):
        values[key] = text
    manifest = RunManifest(
        command=values.pop("command", ""), version=values.pop("version", "")
    )
    seed = values.pop("seed", "none")
    manifest.seed = None if seed == "none" else int(seed)
    manifest.duration = float(values.pop("duration", "0"))
    manifest.n_covariates = int(values.pop("n_covariates", "0"))
    domain = {}
    for key, text in values.items():
        prefix, _, name = key.partition(".")
        if prefix == "config":
            manifest.config[name] = text
        elif prefix == "domain":
            domain[name] = text
        elif prefix == "digest":
            manifest.digests[name] = text
        else:
            manifest.extra[key] = text
    if domain:
        manifest.domain = SpaceTimeDomain(
            _coerce((0.0, 0.0), domain["s1_range"]),
            _coerce((0.0, 0.0), domain["s2_range"]),
            int(domain["t_max"]),
        )
    return manifest


#
# Traces
#
def _trace_rows(trace):
    # pylint: disable=too-many-branches
    if trace.varying_atoms:
        for j, (s, t) in enumerate(zip(trace.field_coords, trace.field_times)):
            yield 0, "field_s1[{}]".format(j + 1), s[0]
            yield 0, "field_s2[{}]".format(j + 1), s[1]
            yield 0, "field_t[{}]".format(j + 1), int(t)

    scalars = trace.scalars()
    for i, iteration in enumerate(trace.iterations):
        it = int(iteration)
        for name, values in (
            ("V", trace.V[i]),
            ("psi1", trace.psi[i, :, 0]),
            ("psi2", trace.psi[i, :, 1]),
            ("zeta", trace.zeta[i]),
        ):
            for k, v in enumerate(values):
                yield it, "{}[{}]".format(name, k + 1), v
        if trace.mu is not None:
            for k, v in enumerate(trace.mu[i]):
                yield it, "mu[{}]".format(k + 1), v
            for k, v in enumerate(trace.sigma2[i]):
                yield it, "sigma2[{}]".format(k + 1), v
        for name, values in scalars.items():
            value = values[i]
            if name == "n_occupied":
                value = int(value)
            yield it, name, value
        if trace.varying_atoms:
            labels, field_values = trace.fields[i]
            for label, row in zip(labels, field_values):
                for j, v in enumerate(row):
                    yield it, "theta[{},{}]".format(label + 1, j + 1), v


def write_trace(path, trace):
    """Write a chain trace in long format."""
    with save_file_atomic(path, newline="") as f:
        writer = _writer(f)
        writer.writerow(TRACE_COLUMNS)
        for it, name, value in _trace_rows(trace):
            if isinstance(value, (int, np.integer)):
                text = str(value)
            else:
                text = fmt(value)
            writer.writerow([str(it), name, text])


def _parse_trace(path):
    records = {}
    static = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = _header(reader, TRACE_COLUMNS, path)
        pos = [header.index(name) for name in TRACE_COLUMNS]
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            it = _int(row[pos[0]], line, "iter")
            match = _PARAM.match(row[pos[1]].strip())
            if match is None:
                raise ParseError(
                    line, "bad parameter {!r}".format(row[pos[1]])
                )
            name, k, j = match.groups()
            key = (
                name,
                None if k is None else int(k) - 1,
                None if j is None else int(j) - 1,
            )
            value = _float(row[pos[2]], line, "value")
            (static if it == 0 else records.setdefault(it, {}))[key] = value
    return records, static


# read_trace():
#
# Read a trace written by write_trace(). The manifest of the fit gives
# the kernel, truncation, configuration and domain.
#
# Returns:
#    (ChainTrace): The trace
#
def read_trace(path, manifest):
    # pylint: disable=too-many-locals
    hyper, config = manifest.configuration()
    records, static = _parse_trace(path)
    iterations = sorted(records)
    M = config.truncation
    p = manifest.n_covariates
    K = len(iterations)

    def vector(name, size, i):
        rec = records[iterations[i]]
        return [rec.get((name, k, None), np.nan) for k in range(size)]

    def scalar(name):
        return np.array(
            [records[it].get((name, None, None), np.nan) for it in iterations]
        )

    def matrix(name, size):
        return np.array(
            [vector(name, size, i) for i in range(K)], dtype=float
        ).reshape(K, size)

    psi = np.stack([matrix("psi1", M), matrix("psi2", M)], axis=-1)
    has_mu = any(("mu", 0, None) in rec for rec in records.values())
    separable = config.kernel is KernelKind.SEPARABLE

    field_coords = field_times = fields_list = None
    if static:
        n_u = 1 + max(k for (_, k, _) in static)
        field_coords = np.array(
            [
                [static[("field_s1", j, None)], static[("field_s2", j, None)]]
                for j in range(n_u)
            ]
        )
        field_times = np.array(
            [int(static[("field_t", j, None)]) for j in range(n_u)]
        )
        fields_list = []
        for it in iterations:
            theta = {
                (k, j): v
                for (name, k, j), v in records[it].items()
                if name == "theta"
            }
            labels = np.array(sorted({k for k, _ in theta}), dtype=int)
            values = np.array(
                [[theta[(k, j)] for j in range(n_u)] for k in labels]
            ).reshape(len(labels), n_u)
            fields_list.append((labels, values))

    return ChainTrace(
        kind=config.kernel,
        truncation=M,
        domain=manifest.domain,
        n_covariates=p,
        config=config,
        hyper=hyper,
        iterations=np.array(iterations, dtype=int),
        V=matrix("V", M),
        psi=psi,
        zeta=matrix("zeta", M),
        sigma2_eps=scalar("sigma2_eps"),
        gamma=scalar("gamma"),
        lam=scalar("lambda"),
        omega_lambda=scalar("omega_lambda"),
        a=scalar("a"),
        b=scalar("b"),
        n_occupied=scalar("n_occupied").astype(int),
        loglik=scalar("loglik"),
        mu=matrix("mu", M) if has_mu else None,
        sigma2=matrix("sigma2", M) if has_mu else None,
        beta=matrix("beta", p) if p else None,
        h=np.column_stack([scalar("h1"), scalar("h2")]) if separable else None,
        h_t=scalar("h_t") if separable else None,
        field_coords=field_coords,
        field_times=field_times,
        fields=fields_list,
    )
