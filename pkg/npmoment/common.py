""" Common variables and functions for all modules

"""

import json, logging, re, sys

from dataclasses import dataclass

import numpy as np

#
# Keys for classifying things
#
ROLES = ["covariate", "outcome", "treatment", "instrument",]
MOMENT_NAMES = ["regression", "quantile", "het_effect", "iv",]
SMOOTHNESS_CLASSES = ["smooth", "piecewise-constant",]
WEIGHT_MODES = ["complete", "incomplete",]
GENERATOR_KINDS = ["linear-embedding", "sparse", "mixture", "product", "manifold-circle",]
MEAN_FUNCTIONS = ["logistic3", "linear", "constant",]
S_POLICIES = ["adaptive", "theory-d", "theory-D", "fixed",]

#
# Numerical tolerances shared between modules
#
SOLVER_TOLERANCE = 1e-10
SOLVER_MAX_ITERATIONS = 100
SOLVER_MAX_HALVINGS = 30
RCOND_THRESHOLD = 1e-12
WEIGHT_SUM_TOLERANCE = 1e-8

#
# CLI exit codes
#
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


#
# Exceptions
#

class NPMomentException(Exception):
    """ Base class for all errors raised by this package """


class ConfigException(NPMomentException):
    """ Bad input, schema or parameters (CLI exit code 2) """


class ParseException(ConfigException):
    """ Malformed input row """

    def __init__ (self, message, line_number=None):
        if line_number is not None:
            message = "line {}: {}".format(line_number, message)
        super().__init__(message)
        self.line_number = line_number


class SchemaException(ConfigException):
    """ Columns, roles or config fields don't fit together """


class PreconditionException(ConfigException, ValueError):
    """ An argument is outside the operation's domain """


class DimensionException(ConfigException):
    """ Vector or matrix shapes don't match """


class UnsupportedInferenceException(ConfigException):
    """ Inference was requested for a moment that can't support it """


class NumericalException(NPMomentException):
    """ The computation itself failed (CLI exit code 3) """


class SingularityException(NumericalException):
    """ A weighted Jacobian or design matrix is (numerically) singular """


class ConvergenceException(NumericalException):
    """ An iterative solve stopped without meeting its tolerance """

    def __init__ (self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DiagnosticException(NumericalException):
    """ A diagnostic could not produce a meaningful answer """


#
# Logging
#

def setup_logging (verbosity=0):
    """ Send log records to stderr; used only by the script entry points """
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


#
# Deterministic randomness
#

@dataclass(frozen=True)
class RngSpec:
    """ A reproducible random stream: (seed, stream id), plus an optional
    path of sub-stream ids for nested splitting.

    Streams are built on the counter-based Philox generator, so the draws
    depend only on (seed, stream_id, path), never on which worker consumes them.

    """
    seed: int
    stream_id: int = 0
    path: tuple = ()

    def generator (self):
        """ Make a fresh numpy Generator for this stream """
        sequence = np.random.SeedSequence(
            entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(int(self.stream_id),) + tuple(int(i) for i in self.path),
        )
        return np.random.Generator(np.random.Philox(sequence))

    def child (self, index):
        """ Return an independent sub-stream of this stream """
        return RngSpec(self.seed, self.stream_id, self.path + (int(index),))


def as_generator (rng):
    """ Accept an RngSpec, a Generator, or an integer seed """
    if isinstance(rng, np.random.Generator):
        return rng
    elif isinstance(rng, RngSpec):
        return rng.generator()
    elif rng is None:
        raise PreconditionException("a random stream is required")
    else:
        return RngSpec(int(rng)).generator()


#
# Utility functions
#

def require (condition, message):
    """ Raise a PreconditionException unless condition holds """
    if not condition:
        raise PreconditionException(message)


def expand_columns (spec):
    """ Expand a column list like "c0..c3,y" into ["c0", "c1", "c2", "c3", "y"]
    A range needs the same prefix on both ends.

    """
    if spec is None:
        return []
    if isinstance(spec, (list, tuple)):
        result = []
        for item in spec:
            result += expand_columns(item)
        return result

    result = []
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        match = re.match(r'^(.*?)(\d+)\.\.(.*?)(\d+)$', part)
        if match and match.group(1) == match.group(3):
            start, end = int(match.group(2)), int(match.group(4))
            step = 1 if end >= start else -1
            for i in range(start, end + step, step):
                result.append("{}{}".format(match.group(1), i))
        else:
            result.append(part)
    return result


def parse_vector (s):
    """ Parse a vector given as "0.1,0.2" or a JSON array """
    if isinstance(s, (list, tuple, np.ndarray)):
        values = list(s)
    else:
        s = str(s).strip()
        try:
            values = json.loads(s) if s.startswith("[") else [v for v in s.split(",") if v.strip()]
        except ValueError:
            raise ParseException("bad vector: {}".format(s))
    try:
        return np.array([float(v) for v in values], dtype=float)
    except (TypeError, ValueError):
        raise ParseException("non-numeric entry in vector: {}".format(s))


def to_jsonable (value):
    """ Convert numpy values (recursively) into plain JSON types """
    if isinstance(value, dict):
        return {str(key): to_jsonable(v) for key, v in value.items()}
    elif isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    elif isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    elif isinstance(value, np.integer):
        return int(value)
    elif isinstance(value, np.floating):
        return float(value)
    elif isinstance(value, float) and not np.isfinite(value):
        return str(value)
    else:
        return value


#
# Look up and manage JSON files
#

datasets_loaded = {}

def get_dataset (path):
    """ Load a JSON file once and keep it """
    global datasets_loaded
    if not path in datasets_loaded:
        try:
            with open(path, "r") as input:
                datasets_loaded[path] = json.load(input)
        except ValueError as e:
            raise ParseException("{}: {}".format(path, e))
    return datasets_loaded[path]


def dump_json (data, output=None):
    """ Write JSON the way every script here does """
    if output is None:
        output = sys.stdout
    json.dump(to_jsonable(data), output, indent=4)
    output.write("\n")

# end
