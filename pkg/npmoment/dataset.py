""" Observations, datasets, file ingestion and sub-sampling

Datasets come from CSV files (first row header, one column per variable)
or from JSON lists of records. Column roles are given by a schema; see
make_schema().

"""

import csv, json, logging

from dataclasses import dataclass

import numpy as np
import pandas as pd

from hxl.datatypes import is_empty

from .common import *

logger = logging.getLogger(__name__)


#
# Data model
#

@dataclass(frozen=True)
class Observation:
    """ One row Z_i = (X_i, Y_i[, T_i][, W_i]) """
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray = None
    w: float = None


def _frozen (array, ndim):
    """ Copy to a read-only float array of the given rank (None stays None) """
    if array is None:
        return None
    array = np.array(array, dtype=float)
    if ndim == 2 and array.ndim == 1:
        array = array.reshape(-1, 1)
    array.setflags(write=False)
    return array


class Dataset:
    """ An immutable set of n observations with covariates in R^D.

    Columns are kept as arrays: X (n x D), Y (n x q), optional T (n x p_T)
    and optional W (n,). Rows are available as Observation values through
    indexing and iteration.

    """

    def __init__ (self, X, Y, T=None, W=None, columns=None):
        self.X = _frozen(X, 2)
        self.Y = _frozen(Y, 2)
        self.T = _frozen(T, 2)
        self.W = _frozen(W, 1)
        self.columns = dict(columns) if columns else None

        if self.X.shape[0] < 1:
            raise SchemaException("empty dataset")
        if self.X.shape[1] < 1:
            raise SchemaException("dataset needs at least one covariate")
        if not np.all(np.isfinite(self.X)):
            raise SchemaException("missing or non-finite covariate entries")
        n = self.X.shape[0]
        for name, array in (("outcome", self.Y), ("treatment", self.T), ("instrument", self.W)):
            if array is not None and array.shape[0] != n:
                raise SchemaException("{} has {} rows, covariates have {}".format(name, array.shape[0], n))
        if self.Y.shape[1] < 1:
            raise SchemaException("dataset needs at least one outcome column")

    @property
    def n (self):
        return self.X.shape[0]

    @property
    def D (self):
        return self.X.shape[1]

    @property
    def q (self):
        return self.Y.shape[1]

    def __len__ (self):
        return self.n

    def __getitem__ (self, i):
        return Observation(
            x=self.X[i],
            y=self.Y[i],
            t=None if self.T is None else self.T[i],
            w=None if self.W is None else float(self.W[i]),
        )

    def __iter__ (self):
        for i in range(self.n):
            yield self[i]

    @property
    def observations (self):
        return list(self)

    def subset (self, indices):
        """ A new Dataset holding only the given rows, in the given order """
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            self.X[indices],
            self.Y[indices],
            None if self.T is None else self.T[indices],
            None if self.W is None else self.W[indices],
            columns=self.columns,
        )

    @classmethod
    def from_observations (cls, observations):
        """ Build a Dataset from a list of Observation values """
        observations = list(observations)
        if not observations:
            raise SchemaException("empty dataset")
        has_t = observations[0].t is not None
        has_w = observations[0].w is not None
        widths = set()
        for obs in observations:
            if (obs.t is not None) != has_t or (obs.w is not None) != has_w:
                raise SchemaException("observations don't share one layout")
            widths.add((np.size(obs.x), np.size(obs.y), np.size(obs.t) if has_t else 0))
        if len(widths) != 1:
            raise SchemaException("observations don't share one layout")
        return cls(
            np.array([np.ravel(obs.x) for obs in observations], dtype=float),
            np.array([np.ravel(obs.y) for obs in observations], dtype=float),
            np.array([np.ravel(obs.t) for obs in observations], dtype=float) if has_t else None,
            np.array([obs.w for obs in observations], dtype=float) if has_w else None,
        )


#
# File input and output
#

def make_schema (covariates, outcome, treatment=None, instrument=None):
    """ Make a column -> role map from column lists (ranges like c0..c19 allowed) """
    schema = {}
    for role, spec in (
            ("covariate", covariates),
            ("outcome", outcome),
            ("treatment", treatment),
            ("instrument", instrument),
    ):
        for column in expand_columns(spec):
            if column in schema:
                raise SchemaException("column {} has more than one role".format(column))
            schema[column] = role
    return schema


def _columns_by_role (schema):
    """ Group a column -> role map by role, keeping the map's order """
    by_role = {role: [] for role in ROLES}
    for column, role in schema.items():
        if role not in ROLES:
            raise SchemaException("unknown role {} for column {}".format(role, column))
        by_role[role].append(column)
    if not by_role["covariate"]:
        raise SchemaException("schema has no covariate columns")
    if not by_role["outcome"]:
        raise SchemaException("schema has no outcome column")
    if len(by_role["instrument"]) > 1:
        raise SchemaException("at most one instrument column is supported")
    return by_role


def _read_rows (path):
    """ Read a CSV file into (header, records, line numbers).
    Blank lines are skipped; line numbers are the file's own (header is
    line 1). A row whose width differs from the header's is a schema error.

    """
    header = None
    records = []
    lines = []
    with open(path, "r", newline="") as input:
        reader = csv.reader(input)
        for row in reader:
            if not row or (len(row) == 1 and is_empty(row[0])):
                continue
            if header is None:
                header = [cell.strip() for cell in row]
                continue
            if len(row) != len(header):
                raise SchemaException("line {}: {} fields, header has {}".format(
                    reader.line_num, len(row), len(header)
                ))
            records.append(row)
            lines.append(reader.line_num)
    if header is None:
        raise SchemaException("empty dataset")
    return header, records, lines


def load_csv (path, schema):
    """ Read a CSV file (first row header) into a Dataset.
    schema maps each used column name to one of ROLES.

    """
    by_role = _columns_by_role(schema)

    try:
        header, records, lines = _read_rows(path)
    except csv.Error as e:
        raise SchemaException("{}: {}".format(path, e))
    frame = pd.DataFrame(records, columns=header, dtype=str)

    missing = [column for column in schema if column not in frame.columns]
    if missing:
        raise SchemaException("columns not in {}: {}".format(path, ", ".join(missing)))
    if len(frame) == 0:
        raise SchemaException("empty dataset")

    arrays = {}
    for role, columns in by_role.items():
        if not columns:
            continue
        values = np.empty((len(frame), len(columns)), dtype=float)
        for j, column in enumerate(columns):
            for i, cell in enumerate(frame[column]):
                if is_empty(cell):
                    raise ParseException("missing value in column {}".format(column), line_number=lines[i])
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise ParseException("non-numeric value {!r} in column {}".format(cell, column), line_number=lines[i])
        arrays[role] = values

    dataset = Dataset(
        arrays["covariate"],
        arrays["outcome"],
        arrays.get("treatment"),
        arrays["instrument"][:, 0] if "instrument" in arrays else None,
        columns=by_role,
    )
    logger.info("Read {} observations (D={}) from {}".format(dataset.n, dataset.D, path))
    return dataset


def default_columns (dataset):
    """ Column names used when writing a dataset that wasn't read from a file """
    if dataset.columns:
        return dataset.columns
    return {
        "covariate": ["x{}".format(j) for j in range(dataset.D)],
        "outcome": ["y"] if dataset.q == 1 else ["y{}".format(j) for j in range(dataset.q)],
        "treatment": [] if dataset.T is None else ["t{}".format(j) for j in range(dataset.T.shape[1])],
        "instrument": [] if dataset.W is None else ["w"],
    }


def write_csv (dataset, path):
    """ Write a Dataset as CSV; returns the column -> role schema for reloading """
    columns = default_columns(dataset)
    frame = pd.DataFrame()
    schema = {}
    for role, array in (
            ("covariate", dataset.X),
            ("outcome", dataset.Y),
            ("treatment", dataset.T),
            ("instrument", None if dataset.W is None else dataset.W.reshape(-1, 1)),
    ):
        if array is None:
            continue
        for j, column in enumerate(columns[role]):
            # repr() is the shortest string that reads back to the same double
            frame[column] = [repr(float(v)) for v in array[:, j]]
            schema[column] = role
    frame.to_csv(path, index=False)
    return schema


def load_json (path):
    """ Read a small JSON fixture: an array of {"x": [...], "y": [...], "t": [...], "w": w} """
    with open(path, "r") as input:
        try:
            records = json.load(input)
        except ValueError as e:
            raise ParseException("{}: {}".format(path, e))
    if not isinstance(records, list):
        raise SchemaException("{}: expected a JSON array of observations".format(path))

    observations = []
    for i, record in enumerate(records):
        if not isinstance(record, dict) or "x" not in record or "y" not in record:
            raise SchemaException("{}: record {} needs \"x\" and \"y\"".format(path, i))
        try:
            w = record.get("w")
            if isinstance(w, list):
                w = w[0] if len(w) == 1 else None
            observations.append(Observation(
                x=np.atleast_1d(np.array(record["x"], dtype=float)),
                y=np.atleast_1d(np.array(record["y"], dtype=float)),
                t=None if record.get("t") is None else np.atleast_1d(np.array(record["t"], dtype=float)),
                w=None if w is None else float(w),
            ))
        except (TypeError, ValueError):
            raise ParseException("{}: record {} has a non-numeric field".format(path, i))
    return Dataset.from_observations(observations)


def load_dataset (path, schema=None):
    """ Read CSV or JSON depending on the file extension """
    if str(path).lower().endswith(".json"):
        return load_json(path)
    if schema is None:
        raise SchemaException("CSV input needs column roles (--covariates, --outcome)")
    return load_csv(path, schema)


#
# Sub-sampling without replacement
#

class SubsampleDrawer:
    """ Partial Fisher-Yates draws of s indices out of n.

    The index array is set up once (O(n)); each draw shuffles only its
    first s slots (O(s)). Leaving the array permuted between draws keeps
    every draw uniform over the C(n, s) subsets.

    """

    def __init__ (self, n, rng):
        require(n >= 1, "n must be at least 1")
        self.n = n
        self.generator = as_generator(rng)
        self.indices = np.arange(n)

    def draw (self, s):
        n = self.n
        if s > n:
            raise PreconditionException("cannot draw s={} from n={} without replacement".format(s, n))
        require(s >= 1, "s must be at least 1")
        indices = self.indices
        swaps = self.generator.integers(np.arange(s), n)
        for i in range(s):
            j = swaps[i]
            indices[i], indices[j] = indices[j], indices[i]
        return indices[:s].copy()


def subsample_without_replacement (n, s, rng):
    """ Draw s distinct indices in [0, n), uniformly over all subsets """
    if s > n:
        raise PreconditionException("cannot draw s={} from n={} without replacement".format(s, n))
    return SubsampleDrawer(n, rng).draw(s)


# end
