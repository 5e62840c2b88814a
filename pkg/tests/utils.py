import csv

import numpy as np

from st_stickbreaking.core import (
    Dataset,
    Observation,
    SpaceTimePoint,
    validate_dataset,
)


def make_dataset(rows, covariates=None, domain=None):
    """Build a validated dataset from (s1, s2, t, y) rows

    :param rows: iterable of (s1, s2, t, y) tuples; y may be None for a
                 point to predict
    :param covariates: optional (n, p) covariates
    :param domain: optional explicit domain
    :return: validated Dataset
    """
    observations = []
    for i, (s1, s2, t, y) in enumerate(rows):
        x = None if covariates is None else tuple(covariates[i])
        missing = y is None
        observations.append(
            Observation(
                SpaceTimePoint(s1, s2, t),
                float("nan") if missing else y,
                x,
                missing,
            )
        )
    return validate_dataset(Dataset(tuple(observations), domain))


def read_csv(path):
    """Read a CSV written by stsb

    :param path: file to read
    :return: (header, rows) with rows as lists of strings
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, list(reader)


def read_column(path, name):
    """Read one numeric column of a CSV

    :param path: file to read
    :param name: column name
    :return: float array
    """
    header, rows = read_csv(path)
    index = header.index(name)
    return np.array([float(row[index]) for row in rows])


def read_manifest_lines(path):
    """Parse key=value lines of a manifest into a dict

    :param path: manifest file
    :return: dictionary of raw values
    """
    values = {}
    with open(path) as f:
        for line in f:
            key, _, value = line.rstrip("\n").partition("=")
            values[key] = value
    return values
